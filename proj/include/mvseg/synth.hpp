#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvseg/frame.hpp"

namespace mvseg {

enum class SpriteShape { rect, ellipse };

struct Sprite {
  SpriteShape shape = SpriteShape::rect;
  int class_id = 1;
  double x = 0, y = 0;    // top-left at frame 0
  double vx = 0, vy = 0;  // pixels per frame
  int w = 32, h = 32;
  std::uint64_t texture_seed = 0;
};

struct SceneSpec {
  int width = 256;
  int height = 256;
  int frames = 10;
  int num_classes = 2;
  int background_class = 0;
  std::uint64_t texture_seed = 1;
  double pan_x = 0, pan_y = 0;  // background motion in pixels per frame
  bool flat_background = false;
  std::vector<Sprite> sprites;
  std::uint64_t seed = 0;
  double fps = 30.0;
};

namespace detail {

inline std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint32_t hash2(std::uint64_t seed, std::int64_t x, std::int64_t y, int c) {
  std::uint64_t h = splitmix(seed ^ 0x51ed27a3ULL);
  h = splitmix(h ^ static_cast<std::uint64_t>(x));
  h = splitmix(h ^ static_cast<std::uint64_t>(y));
  h = splitmix(h ^ static_cast<std::uint64_t>(c));
  return static_cast<std::uint32_t>(h >> 32);
}

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  return (a % b != 0 && ((a < 0) != (b < 0))) ? q - 1 : q;
}

// Integer lattice value noise, cell size 8, output in [0, 255].
inline int value_noise(std::uint64_t seed, std::int64_t x, std::int64_t y, int c) {
  constexpr int kCell = 8;
  const std::int64_t x0 = floor_div(x, kCell), y0 = floor_div(y, kCell);
  const int fx = static_cast<int>(x - x0 * kCell), fy = static_cast<int>(y - y0 * kCell);
  const int v00 = hash2(seed, x0, y0, c) & 0xff, v10 = hash2(seed, x0 + 1, y0, c) & 0xff;
  const int v01 = hash2(seed, x0, y0 + 1, c) & 0xff, v11 = hash2(seed, x0 + 1, y0 + 1, c) & 0xff;
  const int top = v00 * (kCell - fx) + v10 * fx;
  const int bot = v01 * (kCell - fx) + v11 * fx;
  return (top * (kCell - fy) + bot * fy) / (kCell * kCell);
}

inline std::array<int, 3> class_color(int k) {
  static constexpr std::array<std::array<int, 3>, 8> palette{{
      {96, 112, 96}, {200, 60, 50}, {50, 90, 210}, {230, 200, 40},
      {150, 60, 190}, {40, 190, 170}, {240, 130, 30}, {120, 120, 240},
  }};
  if (k < static_cast<int>(palette.size())) return palette[static_cast<std::size_t>(k)];
  std::uint32_t h = hash2(0xC0105, k, 0, 0);
  return {static_cast<int>(h & 0xff), static_cast<int>((h >> 8) & 0xff),
          static_cast<int>((h >> 16) & 0xff)};
}

inline std::uint8_t clamp_u8(int v) { return static_cast<std::uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v)); }

// Textured color: smooth lattice noise plus fine per-pixel noise around a base color.
inline std::array<std::uint8_t, 3> textured(std::uint64_t seed, std::int64_t x, std::int64_t y,
                                            const std::array<int, 3>& base) {
  std::array<std::uint8_t, 3> out{};
  for (int c = 0; c < 3; ++c) {
    int smooth = value_noise(seed, x, y, c) - 128;
    int fine = static_cast<int>(hash2(seed, x, y, c + 3) & 0xff) - 128;
    out[static_cast<std::size_t>(c)] = clamp_u8(base[static_cast<std::size_t>(c)] + smooth / 2 + fine / 4);
  }
  return out;
}

inline int round_position(double v) { return static_cast<int>(std::floor(v + 0.5)); }

inline bool inside_shape(const Sprite& s, int lx, int ly) {
  if (lx < 0 || ly < 0 || lx >= s.w || ly >= s.h) return false;
  if (s.shape == SpriteShape::rect) return true;
  const std::int64_t ex = 2 * lx + 1 - s.w, ey = 2 * ly + 1 - s.h;
  const std::int64_t w2 = static_cast<std::int64_t>(s.w) * s.w, h2 = static_cast<std::int64_t>(s.h) * s.h;
  return ex * ex * h2 + ey * ey * w2 <= w2 * h2;
}

}  // namespace detail

inline void validate(const SceneSpec& spec) {
  check_grid_aligned(spec.width, spec.height);
  require(spec.frames >= 1, "scene must have at least one frame");
  require(spec.num_classes >= 1 && spec.num_classes <= 256, "num_classes must be in [1, 256]");
  require(spec.background_class >= 0 && spec.background_class < spec.num_classes,
          "background class out of range");
  for (const auto& s : spec.sprites) {
    require(s.w > 0 && s.h > 0, "sprite size must be positive");
    require(s.class_id >= 0 && s.class_id < spec.num_classes, "sprite class out of range");
  }
}

// Top-left corner of sprite s at frame t (nearest integer).
inline std::array<int, 2> sprite_position(const Sprite& s, int t) {
  return {detail::round_position(s.x + t * s.vx), detail::round_position(s.y + t * s.vy)};
}

inline VideoSequence generate_synthetic(const SceneSpec& spec) {
  validate(spec);
  VideoSequence seq;
  seq.fps = spec.fps;
  seq.labels.emplace();
  const auto bg_base = detail::class_color(spec.background_class);
  const std::uint64_t bg_seed = detail::splitmix(spec.seed ^ spec.texture_seed);

  for (int t = 0; t < spec.frames; ++t) {
    Frame frame(spec.width, spec.height, 3);
    LabelMap label(spec.width, spec.height, static_cast<std::uint8_t>(spec.background_class));
    const int cx = detail::round_position(t * spec.pan_x);
    const int cy = detail::round_position(t * spec.pan_y);
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        auto px = spec.flat_background
                      ? std::array<std::uint8_t, 3>{detail::clamp_u8(bg_base[0]), detail::clamp_u8(bg_base[1]),
                                                    detail::clamp_u8(bg_base[2])}
                      : detail::textured(bg_seed, x + cx, y + cy, bg_base);
        for (int c = 0; c < 3; ++c) frame.at(x, y, c) = px[static_cast<std::size_t>(c)];
      }
    }
    for (std::size_t k = 0; k < spec.sprites.size(); ++k) {
      const Sprite& s = spec.sprites[k];
      const auto [sx, sy] = sprite_position(s, t);
      const auto base = detail::class_color(s.class_id);
      const std::uint64_t tex = detail::splitmix(spec.seed ^ (s.texture_seed + 0x1000 * (k + 1)));
      const int x0 = std::max(0, sx), x1 = std::min(spec.width, sx + s.w);
      const int y0 = std::max(0, sy), y1 = std::min(spec.height, sy + s.h);
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          const int lx = x - sx, ly = y - sy;
          if (!detail::inside_shape(s, lx, ly)) continue;
          auto px = detail::textured(tex, lx, ly, base);
          for (int c = 0; c < 3; ++c) frame.at(x, y, c) = px[static_cast<std::size_t>(c)];
          label.at(x, y) = static_cast<std::uint8_t>(s.class_id);
        }
      }
    }
    seq.frames.push_back(std::move(frame));
    seq.labels->push_back(std::move(label));
  }
  return seq;
}

// Scene used by the benchmarks: textured panning background and sprites of
// every foreground class crossing the canvas, each passing its start point
// near the middle of the clip.
inline SceneSpec benchmark_scene(int frames = 100, std::uint64_t seed = 7, int width = 320,
                                 int height = 240, int num_classes = 5, int sprite_count = 8) {
  SceneSpec spec;
  spec.width = width;
  spec.height = height;
  spec.frames = frames;
  spec.num_classes = num_classes;
  spec.seed = seed;
  spec.texture_seed = seed * 31 + 3;
  spec.pan_x = 1.0;
  spec.pan_y = 0.0;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int k = 0; k < sprite_count; ++k) {
    Sprite s;
    s.shape = (k % 2 == 0) ? SpriteShape::rect : SpriteShape::ellipse;
    s.class_id = num_classes > 1 ? 1 + k % (num_classes - 1) : 0;
    s.w = 24 + static_cast<int>(unit(rng) * 40);
    s.h = 24 + static_cast<int>(unit(rng) * 40);
    const double speed = 1.0 + unit(rng) * 3.0;
    const double angle = unit(rng) * 2.0 * 3.14159265358979323846;
    s.vx = std::round(speed * std::cos(angle));
    s.vy = std::round(speed * std::sin(angle));
    if (s.vx == 0 && s.vy == 0) s.vx = 1;
    const double mx = unit(rng) * (width - s.w), my = unit(rng) * (height - s.h);
    s.x = std::round(mx - s.vx * frames / 2.0);
    s.y = std::round(my - s.vy * frames / 2.0);
    s.texture_seed = static_cast<std::uint64_t>(k) + 1;
    spec.sprites.push_back(s);
  }
  return spec;
}

inline void to_json(nlohmann::json& j, const Sprite& s) {
  j = {{"shape", s.shape == SpriteShape::rect ? "rect" : "ellipse"},
       {"class", s.class_id}, {"x", s.x}, {"y", s.y}, {"vx", s.vx}, {"vy", s.vy},
       {"w", s.w}, {"h", s.h}, {"texture_seed", s.texture_seed}};
}

inline void from_json(const nlohmann::json& j, Sprite& s) {
  const std::string shape = j.value("shape", "rect");
  if (shape == "rect") {
    s.shape = SpriteShape::rect;
  } else if (shape == "ellipse") {
    s.shape = SpriteShape::ellipse;
  } else {
    throw PreconditionError("unknown sprite shape '" + shape + "'");
  }
  s.class_id = j.value("class", 1);
  s.x = j.value("x", 0.0);
  s.y = j.value("y", 0.0);
  s.vx = j.value("vx", 0.0);
  s.vy = j.value("vy", 0.0);
  s.w = j.value("w", 32);
  s.h = j.value("h", 32);
  s.texture_seed = j.value("texture_seed", std::uint64_t{0});
}

inline void to_json(nlohmann::json& j, const SceneSpec& s) {
  j = {{"width", s.width}, {"height", s.height}, {"frames", s.frames},
       {"num_classes", s.num_classes}, {"background_class", s.background_class},
       {"texture_seed", s.texture_seed}, {"pan", {s.pan_x, s.pan_y}},
       {"flat_background", s.flat_background}, {"sprites", s.sprites},
       {"seed", s.seed}, {"fps", s.fps}};
}

inline void from_json(const nlohmann::json& j, SceneSpec& s) {
  s = SceneSpec{};
  s.width = j.value("width", s.width);
  s.height = j.value("height", s.height);
  s.frames = j.value("frames", s.frames);
  s.num_classes = j.value("num_classes", s.num_classes);
  s.background_class = j.value("background_class", s.background_class);
  s.texture_seed = j.value("texture_seed", s.texture_seed);
  if (j.contains("pan")) {
    s.pan_x = j.at("pan").at(0).get<double>();
    s.pan_y = j.at("pan").at(1).get<double>();
  }
  s.flat_background = j.value("flat_background", false);
  if (j.contains("sprites")) s.sprites = j.at("sprites").get<std::vector<Sprite>>();
  s.seed = j.value("seed", s.seed);
  s.fps = j.value("fps", s.fps);
}

}  // namespace mvseg
