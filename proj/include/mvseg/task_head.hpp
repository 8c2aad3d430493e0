#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "mvseg/binary.hpp"
#include "mvseg/extractor.hpp"
#include "mvseg/feature.hpp"
#include "mvseg/frame.hpp"
#include "mvseg/ridge.hpp"

namespace mvseg {

// Per-pixel class prediction at full frame resolution.
struct SegmentationMap {
  int width = 0;
  int height = 0;
  int num_classes = 0;
  std::vector<std::uint8_t> labels;
  std::vector<float> probabilities;  // C x H x W when requested, else empty

  std::uint8_t at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  LabelMap as_label_map() const {
    LabelMap m(width, height);
    m.labels = labels;
    return m;
  }
};

// Projection (A -> D, 1x1) + ReLU + scoring (D -> C, 1x1) + bilinear
// upsampling by `stride` + softmax. Weights are row-major (out x in).
struct TaskHead {
  int in_channels = 0;
  int hidden = 0;
  int num_classes = 0;
  int stride = 16;
  std::vector<float> projection;
  std::vector<float> projection_bias;
  std::vector<float> scoring;
  std::vector<float> scoring_bias;

  void validate() const {
    require(in_channels > 0 && hidden > 0 && num_classes > 0 && num_classes <= 256 && stride > 0,
            "task head has invalid dimensions");
    require(projection.size() == static_cast<std::size_t>(hidden) * in_channels &&
                projection_bias.size() == static_cast<std::size_t>(hidden) &&
                scoring.size() == static_cast<std::size_t>(num_classes) * hidden &&
                scoring_bias.size() == static_cast<std::size_t>(num_classes),
            "task head weight shapes are inconsistent");
  }
  bool operator==(const TaskHead&) const = default;
};

// Applies a 1x1 layer (out x in weights) at every grid position.
inline FeatureMap apply_pointwise(const FeatureMap& f, const std::vector<float>& weights,
                                  const std::vector<float>& bias, int out_channels) {
  require(weights.size() == static_cast<std::size_t>(out_channels) * f.channels &&
              bias.size() == static_cast<std::size_t>(out_channels),
          "pointwise layer does not match input channels");
  FeatureMap out(out_channels, f.grid_h, f.grid_w, f.stride);
  const std::size_t plane = f.plane();
  for (int o = 0; o < out_channels; ++o) {
    float* dst = &out.values[o * plane];
    std::fill(dst, dst + plane, bias[static_cast<std::size_t>(o)]);
    for (int i = 0; i < f.channels; ++i) {
      const float w = weights[static_cast<std::size_t>(o) * f.channels + i];
      if (w == 0.0f) continue;
      const float* src = &f.values[i * plane];
      for (std::size_t k = 0; k < plane; ++k) dst[k] += w * src[k];
    }
  }
  return out;
}

inline FeatureMap relu(FeatureMap f) {
  for (auto& v : f.values) v = std::max(v, 0.0f);
  return f;
}

// Pre-activation output of the projection layer.
inline FeatureMap project(const FeatureMap& f, const TaskHead& head) {
  require(f.channels == head.in_channels, "feature channels do not match the task head");
  return apply_pointwise(f, head.projection, head.projection_bias, head.hidden);
}

namespace detail {

struct AxisSample {
  int lo = 0;
  int hi = 0;
  float w = 0;  // weight of hi
};

// out(p) samples the grid at (p + 0.5) / s - 0.5, clamped to the grid.
inline std::vector<AxisSample> upsample_axis(int out_size, int grid_size, int s) {
  std::vector<AxisSample> t(static_cast<std::size_t>(out_size));
  for (int p = 0; p < out_size; ++p) {
    double g = (p + 0.5) / s - 0.5;
    g = std::clamp(g, 0.0, static_cast<double>(grid_size - 1));
    const int lo = static_cast<int>(std::floor(g));
    const int hi = std::min(lo + 1, grid_size - 1);
    t[static_cast<std::size_t>(p)] = {lo, hi, static_cast<float>(g - lo)};
  }
  return t;
}

}  // namespace detail

// Bilinear upsampling of every channel to (grid * stride) resolution.
inline std::vector<float> upsample_bilinear(const FeatureMap& scores) {
  const int s = scores.stride, H = scores.grid_h * s, W = scores.grid_w * s;
  const auto ys = detail::upsample_axis(H, scores.grid_h, s);
  const auto xs = detail::upsample_axis(W, scores.grid_w, s);
  std::vector<float> out(static_cast<std::size_t>(scores.channels) * H * W);
  std::vector<float> row(static_cast<std::size_t>(W));
  for (int c = 0; c < scores.channels; ++c) {
    for (int y = 0; y < H; ++y) {
      const auto& sy = ys[static_cast<std::size_t>(y)];
      for (int x = 0; x < W; ++x) {
        const auto& sx = xs[static_cast<std::size_t>(x)];
        const float top = scores.at(c, sy.lo, sx.lo) * (1 - sx.w) + scores.at(c, sy.lo, sx.hi) * sx.w;
        const float bot = scores.at(c, sy.hi, sx.lo) * (1 - sx.w) + scores.at(c, sy.hi, sx.hi) * sx.w;
        row[static_cast<std::size_t>(x)] = top * (1 - sy.w) + bot * sy.w;
      }
      std::copy(row.begin(), row.end(), out.begin() + (static_cast<std::ptrdiff_t>(c) * H + y) * W);
    }
  }
  return out;
}

// Runs the head from the projection layer's pre-activation output onward.
inline SegmentationMap run_head_from_projection(const FeatureMap& pre, const TaskHead& head,
                                                bool keep_probabilities = false) {
  require(pre.channels == head.hidden, "projected features do not match the task head");
  const FeatureMap scores = apply_pointwise(relu(pre), head.scoring, head.scoring_bias, head.num_classes);
  const auto up = upsample_bilinear(scores);
  const int C = head.num_classes;
  SegmentationMap seg;
  seg.width = pre.grid_w * pre.stride;
  seg.height = pre.grid_h * pre.stride;
  seg.num_classes = C;
  const std::size_t npix = static_cast<std::size_t>(seg.width) * seg.height;
  seg.labels.resize(npix);
  if (keep_probabilities) seg.probabilities.resize(static_cast<std::size_t>(C) * npix);
  std::vector<float> prob(static_cast<std::size_t>(C));
  for (std::size_t i = 0; i < npix; ++i) {
    float m = up[i];
    for (int c = 1; c < C; ++c) m = std::max(m, up[c * npix + i]);
    float sum = 0;
    for (int c = 0; c < C; ++c) {
      prob[static_cast<std::size_t>(c)] = std::exp(up[c * npix + i] - m);
      sum += prob[static_cast<std::size_t>(c)];
    }
    int best = 0;
    for (int c = 0; c < C; ++c) {
      prob[static_cast<std::size_t>(c)] /= sum;
      if (prob[static_cast<std::size_t>(c)] > prob[static_cast<std::size_t>(best)]) best = c;
    }
    seg.labels[i] = static_cast<std::uint8_t>(best);
    if (keep_probabilities) {
      for (int c = 0; c < C; ++c) seg.probabilities[c * npix + i] = prob[static_cast<std::size_t>(c)];
    }
  }
  return seg;
}

inline SegmentationMap run_task_head(const FeatureMap& f, const TaskHead& head, bool keep_probabilities = false) {
  head.validate();
  require(f.stride == head.stride, "feature stride does not match the task head");
  return run_head_from_projection(project(f, head), head, keep_probabilities);
}

// Most frequent label in each stride x stride cell, ties to the lower id.
inline std::vector<int> cell_majority(const LabelMap& labels, int stride, int num_classes) {
  const int gh = labels.height / stride, gw = labels.width / stride;
  std::vector<int> out(static_cast<std::size_t>(gh) * gw);
  std::vector<int> counts(static_cast<std::size_t>(num_classes));
  for (int gy = 0; gy < gh; ++gy) {
    for (int gx = 0; gx < gw; ++gx) {
      std::fill(counts.begin(), counts.end(), 0);
      for (int y = gy * stride; y < (gy + 1) * stride; ++y) {
        for (int x = gx * stride; x < (gx + 1) * stride; ++x) {
          const int k = labels.at(x, y);
          require(k < num_classes, "label exceeds the configured class count");
          ++counts[static_cast<std::size_t>(k)];
        }
      }
      out[static_cast<std::size_t>(gy) * gw + gx] =
          static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    }
  }
  return out;
}

struct HeadFitParams {
  int num_classes = 2;
  double lambda = 1e-3;
  std::uint64_t seed = 0;
};

// Projection: identity embedding when hidden >= in_channels, otherwise seeded
// Gaussian rows orthonormalized by Gram-Schmidt with signs chosen so each row
// sums non-negatively.
inline std::vector<float> make_projection(int hidden, int in_channels, std::uint64_t seed) {
  std::vector<float> P(static_cast<std::size_t>(hidden) * in_channels, 0.0f);
  if (hidden >= in_channels) {
    for (int i = 0; i < in_channels; ++i) P[static_cast<std::size_t>(i) * in_channels + i] = 1.0f;
    return P;
  }
  detail::NormalStream normal(detail::splitmix(seed ^ 0x9E0BEC7ULL));
  std::vector<std::vector<double>> rows;
  while (static_cast<int>(rows.size()) < hidden) {
    std::vector<double> r(static_cast<std::size_t>(in_channels));
    for (auto& v : r) v = normal.next();
    for (const auto& q : rows) {
      double dot = 0;
      for (int i = 0; i < in_channels; ++i) dot += r[static_cast<std::size_t>(i)] * q[static_cast<std::size_t>(i)];
      for (int i = 0; i < in_channels; ++i) r[static_cast<std::size_t>(i)] -= dot * q[static_cast<std::size_t>(i)];
    }
    double norm = 0, sum = 0;
    for (double v : r) {
      norm += v * v;
      sum += v;
    }
    norm = std::sqrt(norm);
    if (norm < 1e-8) continue;
    const double sign = sum < 0 ? -1.0 : 1.0;
    for (auto& v : r) v = sign * v / norm;
    rows.push_back(std::move(r));
  }
  for (int o = 0; o < hidden; ++o) {
    for (int i = 0; i < in_channels; ++i) {
      P[static_cast<std::size_t>(o) * in_channels + i] = static_cast<float>(rows[static_cast<std::size_t>(o)][static_cast<std::size_t>(i)]);
    }
  }
  return P;
}

inline int default_hidden(int in_channels, int num_classes) { return std::max(in_channels / 2, num_classes); }

// Fits the scoring layer by ridge regression from post-ReLU projected cell
// features to one-hot cell-majority labels. The bias is regularized too, so a
// huge lambda drives the head towards uniform predictions.
inline TaskHead fit_task_head(const std::vector<FeatureMap>& features, const std::vector<LabelMap>& labels,
                              const HeadFitParams& params) {
  require(!features.empty(), "fit_task_head needs at least one sample");
  require(features.size() == labels.size(), "features and labels must pair up");
  require(params.num_classes >= 1 && params.num_classes <= 256, "num_classes must be in [1, 256]");
  TaskHead head;
  head.in_channels = features[0].channels;
  head.num_classes = params.num_classes;
  head.stride = features[0].stride;
  head.hidden = default_hidden(head.in_channels, head.num_classes);
  head.projection = make_projection(head.hidden, head.in_channels, params.seed);
  head.projection_bias.assign(static_cast<std::size_t>(head.hidden), 0.0f);

  std::size_t rows = 0;
  for (std::size_t k = 0; k < features.size(); ++k) {
    const auto& f = features[k];
    require(f.channels == head.in_channels && f.stride == head.stride, "feature maps differ in shape");
    require(labels[k].width == f.grid_w * f.stride && labels[k].height == f.grid_h * f.stride,
            "label map does not match its feature map");
    rows += f.plane();
  }
  const int D = head.hidden, C = head.num_classes;
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows), D + 1);
  Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), C);
  Eigen::Index r = 0;
  for (std::size_t k = 0; k < features.size(); ++k) {
    const FeatureMap h = relu(project(features[k], head));
    const auto target = cell_majority(labels[k], head.stride, C);
    for (std::size_t cell = 0; cell < h.plane(); ++cell, ++r) {
      for (int d = 0; d < D; ++d) X(r, d) = h.values[d * h.plane() + cell];
      X(r, D) = 1.0;
      Y(r, target[cell]) = 1.0;
    }
  }
  const Eigen::MatrixXd W = ridge_solve(X, Y, params.lambda);
  head.scoring.resize(static_cast<std::size_t>(C) * D);
  head.scoring_bias.resize(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c) {
    for (int d = 0; d < D; ++d) head.scoring[static_cast<std::size_t>(c) * D + d] = static_cast<float>(W(d, c));
    head.scoring_bias[static_cast<std::size_t>(c)] = static_cast<float>(W(D, c));
  }
  return head;
}

// HEAD: "HEAD", u32 in_channels, hidden, classes, stride, then f32 projection
// (hidden x in), projection bias, scoring (classes x hidden), scoring bias.
inline std::vector<char> encode_head(const TaskHead& head) {
  head.validate();
  binary::Writer w;
  w.magic("HEAD");
  for (int v : {head.in_channels, head.hidden, head.num_classes, head.stride}) w.u32(static_cast<std::uint32_t>(v));
  for (const auto* vec : {&head.projection, &head.projection_bias, &head.scoring, &head.scoring_bias}) {
    for (float v : *vec) w.f32(v);
  }
  return w.bytes();
}

inline TaskHead decode_head(std::vector<char> bytes, const std::string& what) {
  binary::Reader r(std::move(bytes), what);
  r.expect_magic("HEAD");
  TaskHead head;
  const auto a = r.u32(), d = r.u32(), c = r.u32(), s = r.u32();
  if (a == 0 || d == 0 || c == 0 || s == 0 || a > 65536 || d > 65536 || c > 256) {
    throw FormatError(what + ": implausible head dimensions");
  }
  head.in_channels = static_cast<int>(a);
  head.hidden = static_cast<int>(d);
  head.num_classes = static_cast<int>(c);
  head.stride = static_cast<int>(s);
  head.projection.resize(static_cast<std::size_t>(d) * a);
  head.projection_bias.resize(d);
  head.scoring.resize(static_cast<std::size_t>(c) * d);
  head.scoring_bias.resize(c);
  const std::size_t expected =
      (head.projection.size() + head.projection_bias.size() + head.scoring.size() + head.scoring_bias.size()) * 4;
  if (r.remaining() != expected) throw FormatError(what + ": truncated payload");
  for (auto* vec : {&head.projection, &head.projection_bias, &head.scoring, &head.scoring_bias}) {
    for (auto& v : *vec) v = r.f32();
  }
  return head;
}

inline void write_head(const std::filesystem::path& p, const TaskHead& h) { binary::write_file(p, encode_head(h)); }
inline TaskHead read_head(const std::filesystem::path& p) { return decode_head(binary::read_file(p), p.string()); }

}  // namespace mvseg
