#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mvseg/error.hpp"

namespace mvseg {

inline constexpr int kGridAlign = 16;

// One video frame, interleaved row-major samples.
struct Frame {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> data;

  Frame() = default;
  Frame(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  std::uint8_t& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  bool operator==(const Frame&) const = default;
};

// Per-pixel class identifiers.
struct LabelMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> labels;

  LabelMap() = default;
  LabelMap(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), labels(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t& at(int x, int y) { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }

  bool operator==(const LabelMap&) const = default;
};

struct VideoSequence {
  std::vector<Frame> frames;
  std::optional<std::vector<LabelMap>> labels;
  double fps = 30.0;

  int size() const { return static_cast<int>(frames.size()); }
  bool has_labels() const { return labels.has_value(); }
  int width() const { return frames.empty() ? 0 : frames.front().width; }
  int height() const { return frames.empty() ? 0 : frames.front().height; }

  // Frames [first, last] inclusive, with their labels.
  VideoSequence slice(int first, int last) const {
    require(first >= 0 && last < size() && first <= last, "slice out of range");
    VideoSequence out;
    out.fps = fps;
    out.frames.assign(frames.begin() + first, frames.begin() + last + 1);
    if (labels) out.labels.emplace(labels->begin() + first, labels->begin() + last + 1);
    return out;
  }
};

inline void check_grid_aligned(int width, int height, int align = kGridAlign) {
  if (width <= 0 || height <= 0 || width % align != 0 || height % align != 0) {
    throw PreconditionError("frame dimensions " + std::to_string(width) + "x" +
                            std::to_string(height) + " are not divisible by " +
                            std::to_string(align));
  }
}

inline void validate(const Frame& f) {
  check_grid_aligned(f.width, f.height);
  require(f.channels == 1 || f.channels == 3, "frame must have 1 or 3 channels");
  require(f.data.size() == static_cast<std::size_t>(f.width) * f.height * f.channels,
          "frame data length does not match its dimensions");
}

inline void validate(const VideoSequence& seq) {
  require(!seq.frames.empty(), "video sequence is empty");
  for (const auto& f : seq.frames) {
    validate(f);
    require(f.width == seq.width() && f.height == seq.height() && f.channels == seq.frames[0].channels,
            "all frames of a sequence must share dimensions");
  }
  if (seq.labels) {
    require(seq.labels->size() == seq.frames.size(), "need exactly one label map per frame");
    for (const auto& l : *seq.labels) {
      require(l.width == seq.width() && l.height == seq.height(),
              "label map dimensions differ from frame dimensions");
    }
  }
}

// ITU-R BT.601 luma in 8.8 fixed point: (77 R + 150 G + 29 B + 128) >> 8.
inline Frame to_luma(const Frame& f) {
  if (f.channels == 1) return f;
  Frame out(f.width, f.height, 1);
  const std::size_t n = static_cast<std::size_t>(f.width) * f.height;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* p = &f.data[i * 3];
    out.data[i] = static_cast<std::uint8_t>((77 * p[0] + 150 * p[1] + 29 * p[2] + 128) >> 8);
  }
  return out;
}

}  // namespace mvseg
