#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <string>
#include <tuple>
#include <vector>

#include "mvseg/binary.hpp"
#include "mvseg/frame.hpp"
#include "mvseg/frame_io.hpp"
#include "mvseg/parallel.hpp"

namespace mvseg {

struct SearchParams {
  int block_size = 16;
  int radius = 16;
  bool luma = true;  // match on BT.601 luma instead of all channels
};

struct MotionVector {
  int dx = 0;
  int dy = 0;
  bool operator==(const MotionVector&) const = default;
};

// Block (bx, by) with top-left (x, y) in the current frame matches the
// previous-frame block at (x + dx, y + dy).
struct MotionVectorMap {
  int grid_w = 0;
  int grid_h = 0;
  int block_size = 16;
  std::vector<MotionVector> vectors;

  MotionVectorMap() = default;
  MotionVectorMap(int gw, int gh, int bs)
      : grid_w(gw), grid_h(gh), block_size(bs), vectors(static_cast<std::size_t>(gw) * gh) {}

  MotionVector& at(int bx, int by) { return vectors[static_cast<std::size_t>(by) * grid_w + bx]; }
  const MotionVector& at(int bx, int by) const {
    return vectors[static_cast<std::size_t>(by) * grid_w + bx];
  }

  bool operator==(const MotionVectorMap&) const = default;
};

struct MotionEstimate {
  MotionVectorMap vectors;
  std::vector<std::uint64_t> costs;  // SSD of the chosen match, per block
};

// Signed per-pixel difference, same layout as Frame.
struct ResidualMap {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::int16_t> data;
};

namespace detail {

inline const Frame& match_plane(const Frame& f, bool luma, Frame& storage) {
  if (!luma || f.channels == 1) return f;
  storage = to_luma(f);
  return storage;
}

// SSD between the current block at (x, y) and the previous block at
// (x + dx, y + dy). Returns early once the partial sum exceeds `bound`.
inline std::uint64_t block_ssd(const Frame& prev, const Frame& cur, int x, int y, int dx, int dy,
                               int bs, std::uint64_t bound) {
  const int ch = cur.channels;
  std::uint64_t sum = 0;
  for (int r = 0; r < bs; ++r) {
    const std::uint8_t* a = &cur.data[(static_cast<std::size_t>(y + r) * cur.width + x) * ch];
    const std::uint8_t* b =
        &prev.data[(static_cast<std::size_t>(y + dy + r) * prev.width + x + dx) * ch];
    for (int i = 0; i < bs * ch; ++i) {
      const int d = static_cast<int>(a[i]) - static_cast<int>(b[i]);
      sum += static_cast<std::uint64_t>(d * d);
    }
    if (sum > bound) return sum;
  }
  return sum;
}

inline void check_pair(const Frame& prev, const Frame& cur, int block_size) {
  require(prev.width == cur.width && prev.height == cur.height && prev.channels == cur.channels,
          "previous and current frames differ in dimensions");
  require(block_size > 0, "block size must be positive");
  require(cur.width % block_size == 0 && cur.height % block_size == 0,
          "frame dimensions must be divisible by the block size");
  require(cur.data.size() == static_cast<std::size_t>(cur.width) * cur.height * cur.channels &&
              prev.data.size() == cur.data.size(),
          "frame data length does not match its dimensions");
}

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

}  // namespace detail

// Exact SSD for one candidate, no early exit. Exposed for verification.
inline std::uint64_t match_cost(const Frame& prev, const Frame& cur, int bx, int by,
                                MotionVector mv, const SearchParams& params) {
  Frame lp, lc;
  const Frame& p = detail::match_plane(prev, params.luma, lp);
  const Frame& c = detail::match_plane(cur, params.luma, lc);
  const int bs = params.block_size;
  return detail::block_ssd(p, c, bx * bs, by * bs, mv.dx, mv.dy, bs,
                           std::numeric_limits<std::uint64_t>::max());
}

// Exhaustive block matching over the window [-radius, radius]^2, intersected
// with the frame. Ties prefer the smaller |dx| + |dy|, then dy, then dx.
inline MotionEstimate estimate_motion_detailed(const Frame& prev, const Frame& cur,
                                               const SearchParams& params) {
  detail::check_pair(prev, cur, params.block_size);
  require(params.radius >= 0, "search radius must be non-negative");
  Frame lp, lc;
  const Frame& p = detail::match_plane(prev, params.luma, lp);
  const Frame& c = detail::match_plane(cur, params.luma, lc);

  const int bs = params.block_size;
  const int gw = cur.width / bs, gh = cur.height / bs;
  MotionEstimate out{MotionVectorMap(gw, gh, bs), std::vector<std::uint64_t>(static_cast<std::size_t>(gw) * gh)};

  parallel_for(0, gh, [&](int by) {
    for (int bx = 0; bx < gw; ++bx) {
      const int x = bx * bs, y = by * bs;
      const int dx_lo = std::max(-params.radius, -x);
      const int dx_hi = std::min(params.radius, cur.width - bs - x);
      const int dy_lo = std::max(-params.radius, -y);
      const int dy_hi = std::min(params.radius, cur.height - bs - y);

      // Seed with the zero vector so early exit prunes aggressively.
      std::uint64_t best = detail::block_ssd(p, c, x, y, 0, 0, bs, std::numeric_limits<std::uint64_t>::max());
      MotionVector best_mv{0, 0};
      auto key = [](std::uint64_t cost, int dx, int dy) {
        return std::make_tuple(cost, std::abs(dx) + std::abs(dy), dy, dx);
      };
      for (int dy = dy_lo; dy <= dy_hi; ++dy) {
        for (int dx = dx_lo; dx <= dx_hi; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const std::uint64_t cost = detail::block_ssd(p, c, x, y, dx, dy, bs, best);
          if (cost > best) continue;
          if (key(cost, dx, dy) < key(best, best_mv.dx, best_mv.dy)) {
            best = cost;
            best_mv = {dx, dy};
          }
        }
      }
      out.vectors.at(bx, by) = best_mv;
      out.costs[static_cast<std::size_t>(by) * gw + bx] = best;
    }
  });
  return out;
}

inline MotionVectorMap estimate_motion(const Frame& prev, const Frame& cur, const SearchParams& params = {}) {
  return estimate_motion_detailed(prev, cur, params).vectors;
}

inline void check_motion_map(const MotionVectorMap& mv, int width, int height) {
  require(mv.block_size > 0 && mv.grid_w * mv.block_size == width && mv.grid_h * mv.block_size == height,
          "motion vector map does not match frame dimensions");
  require(mv.vectors.size() == static_cast<std::size_t>(mv.grid_w) * mv.grid_h,
          "motion vector map has wrong vector count");
}

// residual(p) = cur(p) - prev(p + mv(block(p))). Reference samples outside the
// frame are fetched with edge clamping, so the identity with reconstruct()
// holds for any vector field.
inline ResidualMap compute_residual(const Frame& prev, const Frame& cur, const MotionVectorMap& mv) {
  detail::check_pair(prev, cur, mv.block_size);
  check_motion_map(mv, cur.width, cur.height);
  ResidualMap r{cur.width, cur.height, cur.channels,
                std::vector<std::int16_t>(cur.data.size())};
  const int bs = mv.block_size;
  for (int y = 0; y < cur.height; ++y) {
    for (int x = 0; x < cur.width; ++x) {
      const MotionVector v = mv.at(x / bs, y / bs);
      const int sx = detail::clampi(x + v.dx, 0, cur.width - 1);
      const int sy = detail::clampi(y + v.dy, 0, cur.height - 1);
      for (int c = 0; c < cur.channels; ++c) {
        r.data[(static_cast<std::size_t>(y) * cur.width + x) * cur.channels + c] =
            static_cast<std::int16_t>(static_cast<int>(cur.at(x, y, c)) - static_cast<int>(prev.at(sx, sy, c)));
      }
    }
  }
  return r;
}

// Decoder step: motion-compensated prediction from prev plus residual.
inline Frame reconstruct(const Frame& prev, const MotionVectorMap& mv, const ResidualMap& residual) {
  require(residual.width == prev.width && residual.height == prev.height &&
              residual.channels == prev.channels && residual.data.size() == prev.data.size(),
          "residual does not match frame dimensions");
  check_motion_map(mv, prev.width, prev.height);
  Frame out(prev.width, prev.height, prev.channels);
  const int bs = mv.block_size;
  for (int y = 0; y < prev.height; ++y) {
    for (int x = 0; x < prev.width; ++x) {
      const MotionVector v = mv.at(x / bs, y / bs);
      const int sx = detail::clampi(x + v.dx, 0, prev.width - 1);
      const int sy = detail::clampi(y + v.dy, 0, prev.height - 1);
      for (int c = 0; c < prev.channels; ++c) {
        const int value = static_cast<int>(prev.at(sx, sy, c)) +
                          residual.data[(static_cast<std::size_t>(y) * prev.width + x) * prev.channels + c];
        require(value >= 0 && value <= 255, "residual drives a sample out of range");
        out.at(x, y, c) = static_cast<std::uint8_t>(value);
      }
    }
  }
  return out;
}

inline MotionVectorMap negated(MotionVectorMap mv) {
  for (auto& v : mv.vectors) v = {-v.dx, -v.dy};
  return mv;
}

struct MotionStats {
  double mean_magnitude = 0;  // mean Euclidean length in pixels
  double zero_fraction = 0;
};

inline MotionStats motion_stats(const MotionVectorMap& mv) {
  MotionStats s;
  if (mv.vectors.empty()) return s;
  std::size_t zeros = 0;
  for (const auto& v : mv.vectors) {
    s.mean_magnitude += std::hypot(v.dx, v.dy);
    zeros += (v.dx == 0 && v.dy == 0);
  }
  s.mean_magnitude /= static_cast<double>(mv.vectors.size());
  s.zero_fraction = static_cast<double>(zeros) / static_cast<double>(mv.vectors.size());
  return s;
}

// MVEC sidecar: "MVEC", u32 grid width, grid height, block size, then
// grid_h * grid_w pairs of i16 (dx, dy), all little-endian.
inline std::vector<char> encode_mvec(const MotionVectorMap& mv) {
  binary::Writer w;
  w.magic("MVEC");
  w.u32(static_cast<std::uint32_t>(mv.grid_w));
  w.u32(static_cast<std::uint32_t>(mv.grid_h));
  w.u32(static_cast<std::uint32_t>(mv.block_size));
  for (const auto& v : mv.vectors) {
    require(std::abs(v.dx) <= 32767 && std::abs(v.dy) <= 32767, "motion vector exceeds i16 range");
    w.i16(static_cast<std::int16_t>(v.dx));
    w.i16(static_cast<std::int16_t>(v.dy));
  }
  return w.bytes();
}

inline MotionVectorMap decode_mvec(std::vector<char> bytes, const std::string& what) {
  binary::Reader r(std::move(bytes), what);
  r.expect_magic("MVEC");
  const auto gw = r.u32(), gh = r.u32(), bs = r.u32();
  if (gw == 0 || gh == 0 || bs == 0 || gw > 65536 || gh > 65536 || bs > 4096) {
    throw FormatError(what + ": implausible grid header");
  }
  if (r.remaining() != static_cast<std::size_t>(gw) * gh * 4) throw FormatError(what + ": truncated payload");
  MotionVectorMap mv(static_cast<int>(gw), static_cast<int>(gh), static_cast<int>(bs));
  for (auto& v : mv.vectors) {
    v.dx = r.i16();
    v.dy = r.i16();
  }
  return mv;
}

inline void write_mvec(const std::filesystem::path& path, const MotionVectorMap& mv) {
  binary::write_file(path, encode_mvec(mv));
}

inline MotionVectorMap read_mvec(const std::filesystem::path& path) {
  return decode_mvec(binary::read_file(path), path.string());
}

// fwd_i: frame i against frame i-1 (i >= 1). bwd_i: frame i against frame i+1.
inline std::string forward_sidecar_name(int i) { return numbered_name("fwd_%06d.mvec", i); }
inline std::string backward_sidecar_name(int i) { return numbered_name("bwd_%06d.mvec", i); }

}  // namespace mvseg
