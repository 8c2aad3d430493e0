#pragma once

// Independent reference implementations used only by tests. These avoid the
// library's code paths on purpose: plain nested loops, sets, doubles.

#include <cstdint>
#include <limits>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "mvseg/frame.hpp"

namespace oracle {

inline mvseg::Frame random_frame(int w, int h, int channels, std::mt19937& rng) {
  mvseg::Frame f(w, h, channels);
  std::uniform_int_distribution<int> d(0, 255);
  for (auto& v : f.data) v = static_cast<std::uint8_t>(d(rng));
  return f;
}

inline int luma_of(const mvseg::Frame& f, int x, int y) {
  if (f.channels == 1) return f.at(x, y, 0);
  return (77 * f.at(x, y, 0) + 150 * f.at(x, y, 1) + 29 * f.at(x, y, 2) + 128) >> 8;
}

struct BestMatch {
  std::uint64_t cost = std::numeric_limits<std::uint64_t>::max();
  int dx = 0, dy = 0;
};

// Minimum luma SSD over every in-bounds offset in the window.
inline BestMatch brute_force_block(const mvseg::Frame& prev, const mvseg::Frame& cur, int bx, int by, int bs,
                                   int radius) {
  BestMatch best;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      const int px = bx * bs + dx, py = by * bs + dy;
      if (px < 0 || py < 0 || px + bs > cur.width || py + bs > cur.height) continue;
      std::uint64_t cost = 0;
      for (int y = 0; y < bs; ++y) {
        for (int x = 0; x < bs; ++x) {
          const long d = luma_of(cur, bx * bs + x, by * bs + y) - luma_of(prev, px + x, py + y);
          cost += static_cast<std::uint64_t>(d * d);
        }
      }
      if (cost < best.cost) best = {cost, dx, dy};
    }
  }
  return best;
}

// mIoU from per-class pixel index sets.
inline double set_miou(const std::vector<std::vector<int>>& gts, const std::vector<std::vector<int>>& preds,
                       int num_classes) {
  double sum = 0;
  int present = 0;
  for (int k = 0; k < num_classes; ++k) {
    std::set<std::pair<int, int>> g, p;
    for (std::size_t f = 0; f < gts.size(); ++f) {
      for (std::size_t i = 0; i < gts[f].size(); ++i) {
        if (gts[f][i] == k) g.insert({static_cast<int>(f), static_cast<int>(i)});
        if (preds[f][i] == k) p.insert({static_cast<int>(f), static_cast<int>(i)});
      }
    }
    std::set<std::pair<int, int>> uni = g;
    uni.insert(p.begin(), p.end());
    if (uni.empty()) continue;
    std::size_t inter = 0;
    for (const auto& e : g) inter += p.count(e);
    sum += static_cast<double>(inter) / static_cast<double>(uni.size());
    ++present;
  }
  return sum / present;
}

}  // namespace oracle
