#pragma once

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "mvseg/binary.hpp"
#include "mvseg/frame.hpp"

namespace mvseg {

enum class SequenceFormat { ppm, mvsq };

inline std::string numbered_name(const char* pattern, int index) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, index);
  return buf;
}

inline std::string frame_filename(int i) { return numbered_name("frame_%06d.ppm", i); }
inline std::string label_filename(int i) { return numbered_name("label_%06d.pgm", i); }
inline constexpr const char* kMvsqFilename = "frames.mvsq";

namespace detail {

struct PnmImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;
};

inline PnmImage parse_pnm(const std::vector<char>& bytes, const std::string& what) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&]() -> long {
    skip_space();
    long v = 0;
    std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1'000'000) throw FormatError(what + ": header value out of range");
      ++pos;
    }
    if (pos == start) throw FormatError(what + ": malformed header");
    return v;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '6' && bytes[1] != '5')) {
    throw FormatError(what + ": not a binary PPM/PGM file");
  }
  PnmImage img;
  img.channels = bytes[1] == '6' ? 3 : 1;
  pos = 2;
  img.width = static_cast<int>(number());
  img.height = static_cast<int>(number());
  long maxval = number();
  if (maxval <= 0 || maxval > 255) throw FormatError(what + ": only 8-bit maxval is supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw FormatError(what + ": malformed header");
  }
  ++pos;
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * img.channels;
  if (bytes.size() - pos < n) throw FormatError(what + ": truncated payload");
  img.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                  bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return img;
}

inline std::vector<char> encode_pnm(int width, int height, int channels,
                                    const std::vector<std::uint8_t>& data) {
  std::string header = (channels == 3 ? "P6\n" : "P5\n") + std::to_string(width) + " " +
                       std::to_string(height) + "\n255\n";
  std::vector<char> out(header.begin(), header.end());
  out.insert(out.end(), data.begin(), data.end());
  return out;
}

}  // namespace detail

inline Frame read_ppm(const std::filesystem::path& path) {
  auto img = detail::parse_pnm(binary::read_file(path), path.string());
  if (img.channels != 3) throw FormatError(path.string() + ": expected P6 (RGB) image");
  if (img.width % kGridAlign != 0 || img.height % kGridAlign != 0) {
    throw FormatError(path.string() + ": dimensions " + std::to_string(img.width) + "x" +
                      std::to_string(img.height) + " are not divisible by 16");
  }
  Frame f(img.width, img.height, 3);
  f.data = std::move(img.data);
  return f;
}

inline void write_ppm(const std::filesystem::path& path, const Frame& f) {
  require(f.channels == 3, "PPM output requires an RGB frame");
  binary::write_file(path, detail::encode_pnm(f.width, f.height, 3, f.data));
}

inline LabelMap read_pgm(const std::filesystem::path& path) {
  auto img = detail::parse_pnm(binary::read_file(path), path.string());
  if (img.channels != 1) throw FormatError(path.string() + ": expected P5 (gray) image");
  LabelMap m(img.width, img.height);
  m.labels = std::move(img.data);
  return m;
}

inline void write_pgm(const std::filesystem::path& path, const LabelMap& m) {
  binary::write_file(path, detail::encode_pnm(m.width, m.height, 1, m.labels));
}

// Single-file raw planar RGB: "MVSQ", u32 width, height, frame count, then per
// frame the R, G and B planes.
inline std::vector<char> encode_mvsq(const std::vector<Frame>& frames) {
  require(!frames.empty(), "cannot encode an empty sequence");
  binary::Writer w;
  w.magic("MVSQ");
  w.u32(static_cast<std::uint32_t>(frames[0].width));
  w.u32(static_cast<std::uint32_t>(frames[0].height));
  w.u32(static_cast<std::uint32_t>(frames.size()));
  std::vector<std::uint8_t> plane(static_cast<std::size_t>(frames[0].width) * frames[0].height);
  for (const auto& f : frames) {
    require(f.channels == 3, "MVSQ stores RGB frames only");
    for (int c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = f.data[i * 3 + c];
      w.raw(plane.data(), plane.size());
    }
  }
  return w.bytes();
}

inline std::vector<Frame> decode_mvsq(std::vector<char> bytes, const std::string& what) {
  binary::Reader r(std::move(bytes), what);
  r.expect_magic("MVSQ");
  const auto width = r.u32();
  const auto height = r.u32();
  const auto count = r.u32();
  if (width == 0 || height == 0 || width % kGridAlign != 0 || height % kGridAlign != 0) {
    throw FormatError(what + ": dimensions " + std::to_string(width) + "x" +
                      std::to_string(height) + " are not divisible by 16");
  }
  const std::size_t plane = static_cast<std::size_t>(width) * height;
  if (r.remaining() != plane * 3 * count) throw FormatError(what + ": truncated payload");
  std::vector<Frame> frames;
  frames.reserve(count);
  std::vector<std::uint8_t> buf(plane);
  for (std::uint32_t k = 0; k < count; ++k) {
    Frame f(static_cast<int>(width), static_cast<int>(height), 3);
    for (int c = 0; c < 3; ++c) {
      r.raw(buf.data(), plane);
      for (std::size_t i = 0; i < plane; ++i) f.data[i * 3 + c] = buf[i];
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

// A sequence lives in a directory: frames as frame_%06d.ppm or one frames.mvsq,
// ground truth (optional) as label_%06d.pgm.
inline void store_sequence(const VideoSequence& seq, const std::filesystem::path& dir,
                           SequenceFormat format) {
  validate(seq);
  std::filesystem::create_directories(dir);
  if (format == SequenceFormat::ppm) {
    for (int i = 0; i < seq.size(); ++i) write_ppm(dir / frame_filename(i), seq.frames[i]);
  } else {
    binary::write_file(dir / kMvsqFilename, encode_mvsq(seq.frames));
  }
  if (seq.labels) {
    for (int i = 0; i < seq.size(); ++i) write_pgm(dir / label_filename(i), (*seq.labels)[i]);
  }
}

inline SequenceFormat detect_format(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw PreconditionError(dir.string() + ": no such sequence directory");
  if (std::filesystem::exists(dir / kMvsqFilename)) return SequenceFormat::mvsq;
  if (std::filesystem::exists(dir / frame_filename(0))) return SequenceFormat::ppm;
  throw FormatError(dir.string() + ": no frames found");
}

inline VideoSequence load_sequence(const std::filesystem::path& dir, SequenceFormat format) {
  VideoSequence seq;
  if (format == SequenceFormat::ppm) {
    for (int i = 0; std::filesystem::exists(dir / frame_filename(i)); ++i) {
      seq.frames.push_back(read_ppm(dir / frame_filename(i)));
    }
    if (seq.frames.empty()) throw FormatError(dir.string() + ": no frame_000000.ppm");
  } else {
    auto path = dir / kMvsqFilename;
    seq.frames = decode_mvsq(binary::read_file(path), path.string());
    if (seq.frames.empty()) throw FormatError(path.string() + ": sequence has no frames");
  }
  if (std::filesystem::exists(dir / label_filename(0))) {
    std::vector<LabelMap> labels;
    for (int i = 0; i < seq.size(); ++i) {
      auto p = dir / label_filename(i);
      if (!std::filesystem::exists(p)) throw FormatError(p.string() + ": missing label map");
      labels.push_back(read_pgm(p));
    }
    seq.labels = std::move(labels);
  }
  for (const auto& f : seq.frames) {
    if (f.width != seq.width() || f.height != seq.height()) {
      throw FormatError(dir.string() + ": frames differ in size");
    }
  }
  if (seq.labels) {
    for (const auto& l : *seq.labels) {
      if (l.width != seq.width() || l.height != seq.height()) {
        throw FormatError(dir.string() + ": label map size differs from frame size");
      }
    }
  }
  return seq;
}

inline VideoSequence load_sequence(const std::filesystem::path& dir) {
  return load_sequence(dir, detect_format(dir));
}

}  // namespace mvseg
