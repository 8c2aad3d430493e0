#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mvseg/binary.hpp"
#include "mvseg/feature.hpp"
#include "mvseg/ridge.hpp"
#include "mvseg/task_head.hpp"

namespace mvseg {

enum class FusionOp { max, avg, conv };

inline std::string to_string(FusionOp op) {
  switch (op) {
    case FusionOp::max: return "max";
    case FusionOp::avg: return "avg";
    case FusionOp::conv: return "conv";
  }
  return "?";
}

inline FusionOp parse_fusion(const std::string& s) {
  if (s == "max") return FusionOp::max;
  if (s == "avg") return FusionOp::avg;
  if (s == "conv") return FusionOp::conv;
  throw PreconditionError("unknown fusion operator '" + s + "'");
}

// 1x1 convolution from the stacked [forward; backward] maps (2A) to A channels.
struct ConvFusionWeights {
  int channels = 0;             // A
  std::vector<float> weights;   // A x 2A, row-major
  std::vector<float> bias;      // A

  void validate() const {
    require(channels > 0 && weights.size() == static_cast<std::size_t>(channels) * 2 * channels &&
                bias.size() == static_cast<std::size_t>(channels),
            "conv fusion weights must have shape (A, 2A)");
  }
  bool operator==(const ConvFusionWeights&) const = default;
};

struct FusionConfig {
  FusionOp op = FusionOp::avg;
  std::optional<ConvFusionWeights> conv;
};

// Relevance weights for a frame p frames past the previous keyframe, with the
// next keyframe n frames after it: ((n - p) / n, p / n).
inline std::pair<double, double> relevance_weights(int n, int p) {
  if (p <= 0 || p >= n) {
    throw PreconditionError("relevance weights need 0 < p < n (got n=" + std::to_string(n) +
                            ", p=" + std::to_string(p) + ")");
  }
  const double a = static_cast<double>(n - p) / n;
  return {a, static_cast<double>(p) / n};
}

inline FeatureMap stack_weighted(const FeatureMap& ff, const FeatureMap& fb, float alpha) {
  FeatureMap s(2 * ff.channels, ff.grid_h, ff.grid_w, ff.stride);
  const std::size_t n = ff.values.size();
  for (std::size_t i = 0; i < n; ++i) {
    s.values[i] = alpha * ff.values[i];
    s.values[n + i] = (1.0f - alpha) * fb.values[i];
  }
  return s;
}

// Scales a = alpha * ff and b = (1 - alpha) * fb, then combines: max is
// elementwise max(a, b), avg is a + b, conv applies the 2A -> A layer to [a; b].
inline FeatureMap fuse(const FeatureMap& ff, const FeatureMap& fb, double alpha, const FusionConfig& cfg) {
  require(ff.same_shape(fb), "fused feature maps differ in shape");
  require(alpha > 0.0 && alpha < 1.0, "fusion weight must lie in (0, 1)");
  const float a = static_cast<float>(alpha), b = 1.0f - a;
  if (cfg.op == FusionOp::conv) {
    if (!cfg.conv) throw PreconditionError("conv fusion selected without weights");
    cfg.conv->validate();
    require(cfg.conv->channels == ff.channels, "conv fusion weights do not match feature channels");
    return apply_pointwise(stack_weighted(ff, fb, a), cfg.conv->weights, cfg.conv->bias, ff.channels);
  }
  FeatureMap out(ff.channels, ff.grid_h, ff.grid_w, ff.stride);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const float x = a * ff.values[i], y = b * fb.values[i];
    out.values[i] = cfg.op == FusionOp::max ? std::max(x, y) : x + y;
  }
  return out;
}

struct FusionSample {
  FeatureMap forward;
  FeatureMap backward;
  double alpha = 0.5;
  FeatureMap target;
};

// Ridge fit of the conv fusion layer from weighted stacked inputs to target
// features, one regression row per grid cell.
inline ConvFusionWeights fit_conv_fusion(const std::vector<FusionSample>& samples, double lambda) {
  require(!samples.empty(), "fit_conv_fusion needs at least one sample");
  const int A = samples[0].forward.channels;
  std::size_t rows = 0;
  for (const auto& s : samples) {
    require(s.forward.same_shape(s.backward) && s.forward.same_shape(s.target) && s.forward.channels == A,
            "fusion samples differ in shape");
    rows += s.forward.plane();
  }
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows), 2 * A + 1);
  Eigen::MatrixXd Y(static_cast<Eigen::Index>(rows), A);
  Eigen::Index r = 0;
  for (const auto& s : samples) {
    const std::size_t plane = s.forward.plane();
    const double a = s.alpha, b = 1.0 - s.alpha;
    for (std::size_t cell = 0; cell < plane; ++cell, ++r) {
      for (int c = 0; c < A; ++c) {
        X(r, c) = a * s.forward.values[c * plane + cell];
        X(r, A + c) = b * s.backward.values[c * plane + cell];
        Y(r, c) = s.target.values[c * plane + cell];
      }
      X(r, 2 * A) = 1.0;
    }
  }
  const Eigen::MatrixXd W = ridge_solve(X, Y, lambda);
  ConvFusionWeights out;
  out.channels = A;
  out.weights.resize(static_cast<std::size_t>(A) * 2 * A);
  out.bias.resize(static_cast<std::size_t>(A));
  for (int o = 0; o < A; ++o) {
    for (int i = 0; i < 2 * A; ++i) out.weights[static_cast<std::size_t>(o) * 2 * A + i] = static_cast<float>(W(i, o));
    out.bias[static_cast<std::size_t>(o)] = static_cast<float>(W(2 * A, o));
  }
  return out;
}

// Conv fusion folded into the head's projection: a single 2A -> hidden layer
// whose output feeds the head after its projection, so fusion adds no layer.
struct FoldedFusion {
  int in_channels = 0;  // 2A
  int hidden = 0;
  std::vector<float> weights;
  std::vector<float> bias;
};

inline FoldedFusion fold_into_projection(const ConvFusionWeights& conv, const TaskHead& head) {
  conv.validate();
  head.validate();
  require(conv.channels == head.in_channels, "conv fusion weights do not match the task head");
  const int A = conv.channels, D = head.hidden;
  FoldedFusion out{2 * A, D, std::vector<float>(static_cast<std::size_t>(D) * 2 * A), std::vector<float>(static_cast<std::size_t>(D))};
  for (int d = 0; d < D; ++d) {
    double bias = head.projection_bias[static_cast<std::size_t>(d)];
    for (int a = 0; a < A; ++a) bias += static_cast<double>(head.projection[static_cast<std::size_t>(d) * A + a]) * conv.bias[static_cast<std::size_t>(a)];
    out.bias[static_cast<std::size_t>(d)] = static_cast<float>(bias);
    for (int i = 0; i < 2 * A; ++i) {
      double w = 0;
      for (int a = 0; a < A; ++a) {
        w += static_cast<double>(head.projection[static_cast<std::size_t>(d) * A + a]) * conv.weights[static_cast<std::size_t>(a) * 2 * A + i];
      }
      out.weights[static_cast<std::size_t>(d) * 2 * A + i] = static_cast<float>(w);
    }
  }
  return out;
}

// Pre-activation projection of the conv-fused features, computed in one layer.
inline FeatureMap fuse_projected(const FeatureMap& ff, const FeatureMap& fb, double alpha, const FoldedFusion& folded) {
  require(ff.same_shape(fb), "fused feature maps differ in shape");
  require(alpha > 0.0 && alpha < 1.0, "fusion weight must lie in (0, 1)");
  require(2 * ff.channels == folded.in_channels, "folded fusion does not match feature channels");
  return apply_pointwise(stack_weighted(ff, fb, static_cast<float>(alpha)), folded.weights, folded.bias, folded.hidden);
}

// Conv fusion weights use the HEAD conventions under their own magic:
// "FUSE", u32 A, u32 2A, then f32 weights (A x 2A) and bias (A).
inline std::vector<char> encode_fusion_weights(const ConvFusionWeights& w) {
  w.validate();
  binary::Writer out;
  out.magic("FUSE");
  out.u32(static_cast<std::uint32_t>(w.channels));
  out.u32(static_cast<std::uint32_t>(2 * w.channels));
  for (float v : w.weights) out.f32(v);
  for (float v : w.bias) out.f32(v);
  return out.bytes();
}

inline ConvFusionWeights decode_fusion_weights(std::vector<char> bytes, const std::string& what) {
  binary::Reader r(std::move(bytes), what);
  r.expect_magic("FUSE");
  const auto a = r.u32(), in = r.u32();
  if (a == 0 || a > 65536 || in != 2 * a) throw FormatError(what + ": implausible fusion weight shape");
  ConvFusionWeights w;
  w.channels = static_cast<int>(a);
  w.weights.resize(static_cast<std::size_t>(a) * in);
  w.bias.resize(a);
  if (r.remaining() != (w.weights.size() + w.bias.size()) * 4) throw FormatError(what + ": truncated payload");
  for (auto& v : w.weights) v = r.f32();
  for (auto& v : w.bias) v = r.f32();
  return w;
}

inline void write_fusion_weights(const std::filesystem::path& p, const ConvFusionWeights& w) {
  binary::write_file(p, encode_fusion_weights(w));
}
inline ConvFusionWeights read_fusion_weights(const std::filesystem::path& p) {
  return decode_fusion_weights(binary::read_file(p), p.string());
}

}  // namespace mvseg
