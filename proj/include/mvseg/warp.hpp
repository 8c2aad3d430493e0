#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "mvseg/block_motion.hpp"
#include "mvseg/feature.hpp"

namespace mvseg {

enum class WarpDirection { forward, backward };

// Per-cell sampling offsets in feature-grid units.
struct DisplacementField {
  int grid_h = 0;
  int grid_w = 0;
  WarpDirection direction = WarpDirection::forward;
  std::vector<float> dx;
  std::vector<float> dy;

  DisplacementField() = default;
  DisplacementField(int h, int w, WarpDirection dir = WarpDirection::forward)
      : grid_h(h), grid_w(w), direction(dir),
        dx(static_cast<std::size_t>(h) * w, 0.0f), dy(static_cast<std::size_t>(h) * w, 0.0f) {}

  std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * grid_w + x; }
};

inline DisplacementField constant_field(int h, int w, float dx, float dy) {
  DisplacementField d(h, w);
  std::fill(d.dx.begin(), d.dx.end(), dx);
  std::fill(d.dy.begin(), d.dy.end(), dy);
  return d;
}

// Converts a block motion map to a sampling field on a stride-s feature grid.
// Vectors are used as-is: each one points from the target frame into the
// frame whose features are being pulled, so the same conversion serves the
// forward (fwd_i) and backward (bwd_i) sidecars. When block size == s the
// mapping is cell-to-cell; otherwise each cell takes the block under its
// center pixel.
inline DisplacementField mv_to_field(const MotionVectorMap& mv, int stride,
                                     WarpDirection direction = WarpDirection::forward) {
  require(stride > 0 && mv.block_size > 0, "stride and block size must be positive");
  require(mv.block_size % stride == 0 || stride % mv.block_size == 0,
          "block size must be a multiple or divisor of the feature stride");
  const int width = mv.grid_w * mv.block_size, height = mv.grid_h * mv.block_size;
  require(width % stride == 0 && height % stride == 0, "motion grid does not tile the feature grid");
  require(mv.vectors.size() == static_cast<std::size_t>(mv.grid_w) * mv.grid_h,
          "motion vector map has wrong vector count");
  DisplacementField d(height / stride, width / stride, direction);
  const float inv = 1.0f / static_cast<float>(stride);
  for (int gy = 0; gy < d.grid_h; ++gy) {
    for (int gx = 0; gx < d.grid_w; ++gx) {
      const int by = std::min((gy * stride + stride / 2) / mv.block_size, mv.grid_h - 1);
      const int bx = std::min((gx * stride + stride / 2) / mv.block_size, mv.grid_w - 1);
      const MotionVector v = mv.at(bx, by);
      d.dx[d.index(gy, gx)] = static_cast<float>(v.dx) * inv;
      d.dy[d.index(gy, gx)] = static_cast<float>(v.dy) * inv;
    }
  }
  return d;
}

// Pull warp: out(c, y, x) = bilinear sample of f at (y + dy, x + dx), with the
// sample point clamped to the grid.
inline FeatureMap warp_features(const FeatureMap& f, const DisplacementField& d) {
  require(f.grid_h == d.grid_h && f.grid_w == d.grid_w, "displacement field does not match the feature grid");
  require(d.dx.size() == f.plane() && d.dy.size() == f.plane(), "displacement field has wrong size");
  FeatureMap out(f.channels, f.grid_h, f.grid_w, f.stride);
  const float ymax = static_cast<float>(f.grid_h - 1), xmax = static_cast<float>(f.grid_w - 1);
  const std::size_t plane = f.plane();
  for (int y = 0; y < f.grid_h; ++y) {
    for (int x = 0; x < f.grid_w; ++x) {
      const std::size_t i = d.index(y, x);
      const float sy = std::clamp(static_cast<float>(y) + d.dy[i], 0.0f, ymax);
      const float sx = std::clamp(static_cast<float>(x) + d.dx[i], 0.0f, xmax);
      const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
      const int y1 = std::min(y0 + 1, f.grid_h - 1), x1 = std::min(x0 + 1, f.grid_w - 1);
      const float wy = sy - static_cast<float>(y0), wx = sx - static_cast<float>(x0);
      const std::size_t i00 = static_cast<std::size_t>(y0) * f.grid_w + x0;
      const std::size_t i01 = static_cast<std::size_t>(y0) * f.grid_w + x1;
      const std::size_t i10 = static_cast<std::size_t>(y1) * f.grid_w + x0;
      const std::size_t i11 = static_cast<std::size_t>(y1) * f.grid_w + x1;
      for (int c = 0; c < f.channels; ++c) {
        const float* src = &f.values[c * plane];
        float v;
        if (wx == 0.0f && wy == 0.0f) {
          v = src[i00];
        } else {
          const float top = src[i00] * (1.0f - wx) + src[i01] * wx;
          const float bot = src[i10] * (1.0f - wx) + src[i11] * wx;
          v = top * (1.0f - wy) + bot * wy;
        }
        out.values[c * plane + i] = v;
      }
    }
  }
  return out;
}

// O[0] = f, O[i] = warp(O[i-1], fields[i-1]) for i = 1..steps.
inline std::vector<FeatureMap> propagate(const FeatureMap& f, int steps, std::span<const DisplacementField> fields) {
  require(steps >= 0, "steps must be non-negative");
  require(fields.size() >= static_cast<std::size_t>(steps), "not enough displacement fields to propagate");
  std::vector<FeatureMap> out;
  out.reserve(static_cast<std::size_t>(steps) + 1);
  out.push_back(f);
  for (int i = 1; i <= steps; ++i) out.push_back(warp_features(out.back(), fields[static_cast<std::size_t>(i - 1)]));
  return out;
}

}  // namespace mvseg
