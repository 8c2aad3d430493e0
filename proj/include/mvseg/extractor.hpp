#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mvseg/error.hpp"
#include "mvseg/feature.hpp"
#include "mvseg/frame.hpp"
#include "mvseg/synth.hpp"

namespace mvseg {

enum class ExtractorKind { oracle, handcraft };

struct ExtractorConfig {
  ExtractorKind kind = ExtractorKind::oracle;
  int stride = 16;
  int num_classes = 2;      // oracle channel count
  int channels = 16;        // handcraft channel count
  double noise_sigma = 0.0; // oracle Gaussian noise
  std::uint64_t seed = 0;

  int feature_channels() const { return kind == ExtractorKind::oracle ? num_classes : channels; }
};

inline std::string to_string(ExtractorKind k) { return k == ExtractorKind::oracle ? "oracle" : "handcraft"; }

inline ExtractorKind parse_extractor(const std::string& s) {
  if (s == "oracle") return ExtractorKind::oracle;
  if (s == "handcraft") return ExtractorKind::handcraft;
  throw PreconditionError("unknown extractor '" + s + "'");
}

namespace detail {

// Standard normal draws via Box-Muller over mt19937_64, stable across
// standard library implementations.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : rng_(seed) {}
  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0;
    do {
      u1 = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    } while (u1 <= 0.0);
    const double u2 = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * 3.14159265358979323846 * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

 private:
  std::mt19937_64 rng_;
  double spare_ = 0;
  bool has_spare_ = false;
};

inline FeatureMap oracle_features(const LabelMap& labels, const ExtractorConfig& cfg, std::uint64_t noise_key) {
  const int s = cfg.stride;
  const int gh = labels.height / s, gw = labels.width / s;
  FeatureMap f(cfg.num_classes, gh, gw, s);
  const float inv_area = 1.0f / static_cast<float>(s * s);
  for (int gy = 0; gy < gh; ++gy) {
    for (int gx = 0; gx < gw; ++gx) {
      for (int y = gy * s; y < (gy + 1) * s; ++y) {
        for (int x = gx * s; x < (gx + 1) * s; ++x) {
          const int k = labels.at(x, y);
          require(k < cfg.num_classes, "label exceeds the configured class count");
          f.at(k, gy, gx) += inv_area;
        }
      }
    }
  }
  if (cfg.noise_sigma > 0) {
    NormalStream noise(splitmix(cfg.seed ^ splitmix(noise_key + 0x0AC1E)));
    for (auto& v : f.values) v += static_cast<float>(cfg.noise_sigma * noise.next());
  }
  return f;
}

inline std::vector<float> luma_plane(const Frame& frame) {
  std::vector<float> y(static_cast<std::size_t>(frame.width) * frame.height);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (frame.channels == 3) {
      const std::uint8_t* p = &frame.data[i * 3];
      y[i] = 0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2];
    } else {
      y[i] = frame.data[i];
    }
  }
  return y;
}

constexpr int kGaborRadius = 4;
constexpr int kGaborTaps = 2 * kGaborRadius + 1;

// Zero-mean 9x9 Gabor kernel at the given orientation.
inline std::array<float, kGaborTaps * kGaborTaps> gabor_kernel(double theta) {
  std::array<double, kGaborTaps * kGaborTaps> k{};
  double mean = 0;
  for (int dy = -kGaborRadius; dy <= kGaborRadius; ++dy) {
    for (int dx = -kGaborRadius; dx <= kGaborRadius; ++dx) {
      const double u = dx * std::cos(theta) + dy * std::sin(theta);
      const double g = std::exp(-(dx * dx + dy * dy) / (2.0 * 2.5 * 2.5));
      const double v = g * std::cos(2.0 * 3.14159265358979323846 * u / 6.0);
      k[static_cast<std::size_t>((dy + kGaborRadius) * kGaborTaps + dx + kGaborRadius)] = v;
      mean += v;
    }
  }
  mean /= static_cast<double>(k.size());
  std::array<float, kGaborTaps * kGaborTaps> out{};
  for (std::size_t i = 0; i < k.size(); ++i) out[i] = static_cast<float>(k[i] - mean);
  return out;
}

// Channels: mean R, G, B; 4-bin luma histogram; gradient energy; then one
// oriented filter-energy channel per remaining slot. Truncated to `channels`.
inline FeatureMap handcraft_features(const Frame& frame, const ExtractorConfig& cfg) {
  require(cfg.channels >= 1, "handcraft extractor needs at least one channel");
  const int s = cfg.stride, W = frame.width, H = frame.height;
  const int gh = H / s, gw = W / s;
  constexpr int kBase = 8;
  const int filters = std::max(0, cfg.channels - kBase);
  const int total = kBase + filters;
  FeatureMap full(total, gh, gw, s);
  const auto luma = luma_plane(frame);
  auto Y = [&](int x, int y) {
    x = x < 0 ? 0 : (x >= W ? W - 1 : x);
    y = y < 0 ? 0 : (y >= H ? H - 1 : y);
    return luma[static_cast<std::size_t>(y) * W + x];
  };
  const float inv_area = 1.0f / static_cast<float>(s * s);

  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const int gy = y / s, gx = x / s;
      for (int c = 0; c < 3; ++c) {
        const int v = frame.channels == 3 ? frame.at(x, y, c) : frame.at(x, y, 0);
        full.at(c, gy, gx) += static_cast<float>(v) / 255.0f * inv_area;
      }
      const float l = Y(x, y);
      const int bin = std::min(3, static_cast<int>(l / 64.0f));
      full.at(3 + bin, gy, gx) += inv_area;
      const float gxv = (Y(x + 1, y) - Y(x - 1, y)) * 0.5f / 255.0f;
      const float gyv = (Y(x, y + 1) - Y(x, y - 1)) * 0.5f / 255.0f;
      full.at(7, gy, gx) += (gxv * gxv + gyv * gyv) * inv_area;
    }
  }
  for (int k = 0; k < filters; ++k) {
    const auto kernel = gabor_kernel(3.14159265358979323846 * k / filters);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        float r = 0;
        for (int dy = -kGaborRadius; dy <= kGaborRadius; ++dy) {
          for (int dx = -kGaborRadius; dx <= kGaborRadius; ++dx) {
            r += kernel[static_cast<std::size_t>((dy + kGaborRadius) * kGaborTaps + dx + kGaborRadius)] *
                 Y(x + dx, y + dy);
          }
        }
        full.at(kBase + k, y / s, x / s) += std::fabs(r) / 255.0f * inv_area;
      }
    }
  }
  if (cfg.channels == total) return full;
  FeatureMap out(cfg.channels, gh, gw, s);
  std::copy_n(full.values.begin(), out.values.size(), out.values.begin());
  return out;
}

}  // namespace detail

// Feature network stand-in. `labels` is required by the oracle extractor;
// `noise_key` (usually the frame index) keys its deterministic noise.
inline FeatureMap extract_features(const Frame& frame, const LabelMap* labels, const ExtractorConfig& cfg,
                                   std::uint64_t noise_key = 0) {
  require(cfg.stride > 0, "stride must be positive");
  require(frame.width % cfg.stride == 0 && frame.height % cfg.stride == 0,
          "frame dimensions must be divisible by the feature stride");
  if (cfg.kind == ExtractorKind::oracle) {
    if (labels == nullptr) throw PreconditionError("oracle extractor requires ground-truth labels");
    require(labels->width == frame.width && labels->height == frame.height,
            "label map dimensions differ from frame dimensions");
    require(cfg.num_classes >= 1, "oracle extractor needs num_classes >= 1");
    return detail::oracle_features(*labels, cfg, noise_key);
  }
  return detail::handcraft_features(frame, cfg);
}

}  // namespace mvseg
