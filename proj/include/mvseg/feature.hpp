#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mvseg/binary.hpp"
#include "mvseg/error.hpp"

namespace mvseg {

// C x H x W feature tensor at `stride` pixels per cell, channel-major.
struct FeatureMap {
  int channels = 0;
  int grid_h = 0;
  int grid_w = 0;
  int stride = 16;
  std::vector<float> values;

  FeatureMap() = default;
  FeatureMap(int c, int h, int w, int s, float fill = 0.0f)
      : channels(c), grid_h(h), grid_w(w), stride(s),
        values(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t plane() const { return static_cast<std::size_t>(grid_h) * grid_w; }
  float& at(int c, int y, int x) { return values[c * plane() + static_cast<std::size_t>(y) * grid_w + x]; }
  float at(int c, int y, int x) const {
    return values[c * plane() + static_cast<std::size_t>(y) * grid_w + x];
  }

  bool same_shape(const FeatureMap& o) const {
    return channels == o.channels && grid_h == o.grid_h && grid_w == o.grid_w && stride == o.stride;
  }
  bool operator==(const FeatureMap&) const = default;
};

inline bool all_finite(const FeatureMap& f) {
  return std::all_of(f.values.begin(), f.values.end(), [](float v) { return std::isfinite(v); });
}

inline float max_abs_diff(const FeatureMap& a, const FeatureMap& b) {
  require(a.same_shape(b), "feature maps differ in shape");
  float m = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) m = std::max(m, std::fabs(a.values[i] - b.values[i]));
  return m;
}

// FMAP: "FMAP", u32 channels, grid h, grid w, stride, then f32 values.
inline std::vector<char> encode_fmap(const FeatureMap& f) {
  binary::Writer w;
  w.magic("FMAP");
  w.u32(static_cast<std::uint32_t>(f.channels));
  w.u32(static_cast<std::uint32_t>(f.grid_h));
  w.u32(static_cast<std::uint32_t>(f.grid_w));
  w.u32(static_cast<std::uint32_t>(f.stride));
  for (float v : f.values) w.f32(v);
  return w.bytes();
}

inline FeatureMap decode_fmap(std::vector<char> bytes, const std::string& what) {
  binary::Reader r(std::move(bytes), what);
  r.expect_magic("FMAP");
  const auto c = r.u32(), h = r.u32(), w = r.u32(), s = r.u32();
  if (c == 0 || h == 0 || w == 0 || s == 0 || c > 65536 || h > 65536 || w > 65536) {
    throw FormatError(what + ": implausible feature map header");
  }
  FeatureMap f(static_cast<int>(c), static_cast<int>(h), static_cast<int>(w), static_cast<int>(s));
  if (r.remaining() != f.values.size() * 4) throw FormatError(what + ": truncated payload");
  for (auto& v : f.values) v = r.f32();
  return f;
}

inline void write_fmap(const std::filesystem::path& p, const FeatureMap& f) { binary::write_file(p, encode_fmap(f)); }
inline FeatureMap read_fmap(const std::filesystem::path& p) { return decode_fmap(binary::read_file(p), p.string()); }

}  // namespace mvseg
