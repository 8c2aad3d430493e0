#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mvseg/pipeline.hpp"

namespace mvseg {

// Rows are ground truth, columns are predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes)
      : n_(num_classes), counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
    require(num_classes >= 1, "confusion matrix needs at least one class");
  }

  void add(int gt, int pred, std::int64_t count = 1) {
    if (gt < 0 || gt >= n_ || pred < 0 || pred >= n_) {
      throw PreconditionError("label outside [0, " + std::to_string(n_) + ")");
    }
    counts_[static_cast<std::size_t>(gt) * n_ + pred] += count;
  }

  void add(const LabelMap& gt, const std::vector<std::uint8_t>& pred) {
    require(gt.labels.size() == pred.size(), "prediction and ground truth differ in size");
    for (std::size_t i = 0; i < pred.size(); ++i) add(gt.labels[i], pred[i]);
  }

  void merge(const ConfusionMatrix& o) {
    require(o.n_ == n_, "confusion matrices differ in class count");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
  }

  int num_classes() const { return n_; }
  std::int64_t at(int gt, int pred) const { return counts_[static_cast<std::size_t>(gt) * n_ + pred]; }
  std::int64_t total() const {
    std::int64_t s = 0;
    for (auto c : counts_) s += c;
    return s;
  }

  // IoU of class k, or nullopt when k appears in neither ground truth nor
  // prediction.
  std::optional<double> iou(int k) const {
    std::int64_t row = 0, col = 0;
    for (int j = 0; j < n_; ++j) {
      row += at(k, j);
      col += at(j, k);
    }
    const std::int64_t uni = row + col - at(k, k);
    if (uni == 0) return std::nullopt;
    return static_cast<double>(at(k, k)) / static_cast<double>(uni);
  }

  // Mean IoU over classes present in ground truth or prediction.
  double miou() const {
    double sum = 0;
    int present = 0;
    for (int k = 0; k < n_; ++k) {
      if (auto v = iou(k)) {
        sum += *v;
        ++present;
      }
    }
    if (present == 0) throw PreconditionError("mIoU of an empty evaluation");
    return sum / present;
  }

 private:
  int n_;
  std::vector<std::int64_t> counts_;
};

inline ConfusionMatrix confusion(const std::vector<SegmentationMap>& preds, const std::vector<LabelMap>& gts,
                                 int num_classes) {
  require(preds.size() == gts.size(), "prediction and ground-truth lists differ in length");
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    require(preds[i].width == gts[i].width && preds[i].height == gts[i].height,
            "prediction and ground truth differ in size");
    cm.add(gts[i], preds[i].labels);
  }
  return cm;
}

inline double miou(const std::vector<SegmentationMap>& preds, const std::vector<LabelMap>& gts, int num_classes) {
  return confusion(preds, gts, num_classes).miou();
}

struct OffsetAccuracy {
  std::map<int, double> per_offset;
  double avg = 0;  // pooled over every labeled frame
  double min = 0;  // worst per-offset mIoU
};

inline OffsetAccuracy aggregate_offsets(const std::map<int, ConfusionMatrix>& by_offset, int num_classes) {
  require(!by_offset.empty(), "no labeled frames to evaluate");
  OffsetAccuracy out;
  ConfusionMatrix pooled(num_classes);
  out.min = std::numeric_limits<double>::infinity();
  for (const auto& [p, cm] : by_offset) {
    const double v = cm.miou();
    out.per_offset[p] = v;
    out.min = std::min(out.min, v);
    pooled.merge(cm);
  }
  out.avg = pooled.miou();
  return out;
}

// Groups labeled frames by keyframe offset. `labeled` selects frames (all
// frames when empty).
inline OffsetAccuracy per_offset_accuracy(const PipelineResult& result, const std::vector<LabelMap>& gts,
                                          int num_classes, const std::vector<int>& labeled = {}) {
  require(gts.size() == result.segmentations.size(), "one ground-truth map per frame is required");
  require(result.offsets.size() == result.segmentations.size(), "result has no offsets recorded");
  std::vector<int> frames = labeled;
  if (frames.empty()) {
    for (int i = 0; i < static_cast<int>(gts.size()); ++i) frames.push_back(i);
  }
  std::map<int, ConfusionMatrix> by_offset;
  for (int i : frames) {
    require(i >= 0 && i < static_cast<int>(gts.size()), "labeled frame index out of range");
    const int p = result.offsets[static_cast<std::size_t>(i)];
    auto it = by_offset.try_emplace(p, num_classes).first;
    const auto& seg = result.segmentations[static_cast<std::size_t>(i)];
    require(seg.width == gts[static_cast<std::size_t>(i)].width && seg.height == gts[static_cast<std::size_t>(i)].height,
            "prediction and ground truth differ in size");
    it->second.add(gts[static_cast<std::size_t>(i)], seg.labels);
  }
  return aggregate_offsets(by_offset, num_classes);
}

// ---------------------------------------------------------------------------
// Cost model, milliseconds.

struct CostModel {
  double t_key = 0;     // feature extraction + task head
  double t_inter = 0;   // warp (+ fusion) + task head
  double t_motion = 0;  // per-frame motion estimation, when simulated

  bool realistic() const { return t_key >= t_inter; }
};

inline double predict_fps(const CostModel& m, int n, Scheme scheme) {
  require(n >= 1, "keyframe interval must be >= 1");
  require(m.t_key > 0 && m.t_inter >= 0 && m.t_motion >= 0, "cost model times must be positive");
  if (scheme == Scheme::baseline) return 1000.0 / m.t_key;
  return 1000.0 * n / (m.t_key + (n - 1) * (m.t_inter + m.t_motion));
}

struct Throughput {
  double fps = 0;
  double seconds = 0;
  std::map<std::string, double> shares;
};

inline Throughput measure_throughput(const PipelineResult& r, bool include_ingest = false) {
  const auto& t = r.timing;
  Throughput out;
  out.seconds = t.inference_total() + (include_ingest ? t.ingest() : 0.0);
  if (!(out.seconds > 0)) throw PreconditionError("no elapsed time recorded");
  out.fps = static_cast<double>(r.segmentations.size()) / out.seconds;
  out.shares = {{"feature_extraction", t.feature_extraction / out.seconds},
                {"field_conversion", t.field_conversion / out.seconds},
                {"warp", t.warp / out.seconds},
                {"fusion", t.fusion / out.seconds},
                {"task_head", t.task_head / out.seconds}};
  if (include_ingest) {
    out.shares["motion_read"] = t.motion_read / out.seconds;
    out.shares["motion_estimate"] = t.motion_estimate / out.seconds;
  }
  return out;
}

// Mean per-frame times of keyframes and intermediate frames, in ms.
inline CostModel measured_cost_model(const PipelineResult& r) {
  double key = 0, inter = 0;
  int nk = 0, ni = 0;
  for (std::size_t i = 0; i < r.offsets.size(); ++i) {
    if (r.offsets[i] == 0) {
      key += r.timing.frame_seconds[i];
      ++nk;
    } else {
      inter += r.timing.frame_seconds[i];
      ++ni;
    }
  }
  CostModel m;
  m.t_key = nk ? 1000.0 * key / nk : 0.0;
  m.t_inter = ni ? 1000.0 * inter / ni : 0.0;
  return m;
}

// ---------------------------------------------------------------------------
// Accuracy-throughput curve.

struct CurveRow {
  std::string scheme;
  int n = 1;
  double miou_avg = 0;
  double miou_min = 0;
  double fps = 0;
  int delay_frames = 0;
  bool operator==(const CurveRow&) const = default;
};

inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

inline constexpr const char* kCurveHeader = "scheme,n,miou_avg,miou_min,fps,delay_frames";

inline std::string emit_curve(std::vector<CurveRow> rows) {
  require(!rows.empty(), "curve needs at least one run");
  std::stable_sort(rows.begin(), rows.end(),
                   [](const CurveRow& a, const CurveRow& b) { return std::tie(a.scheme, a.n) < std::tie(b.scheme, b.n); });
  std::ostringstream out;
  out << kCurveHeader << '\n';
  for (const auto& r : rows) {
    out << r.scheme << ',' << r.n << ',' << format_double(r.miou_avg) << ',' << format_double(r.miou_min) << ','
        << format_double(r.fps) << ',' << r.delay_frames << '\n';
  }
  return out.str();
}

inline std::vector<CurveRow> parse_curve(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != kCurveHeader) throw FormatError("curve CSV: unexpected header");
  std::vector<CurveRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
    if (cols.size() != 6) throw FormatError("curve CSV: expected 6 columns in '" + line + "'");
    CurveRow r;
    r.scheme = cols[0];
    auto num = [&](const std::string& s, auto& out) {
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
      if (ec != std::errc() || p != s.data() + s.size()) throw FormatError("curve CSV: bad number '" + s + "'");
    };
    num(cols[1], r.n);
    num(cols[2], r.miou_avg);
    num(cols[3], r.miou_min);
    num(cols[4], r.fps);
    num(cols[5], r.delay_frames);
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Sparse-label evaluation with rotating keyframe placement.

// Labeled frames usable at interval n: every offset's keyframe window must fit
// inside the sequence, so all schemes are scored on the same frames.
inline std::vector<int> eligible_frames(const std::vector<int>& labeled, int n, int frame_count) {
  std::vector<int> out;
  for (int t : labeled) {
    if (n == 1 || (t >= n - 1 && t + n <= frame_count - 1)) out.push_back(t);
  }
  return out;
}

// For each labeled frame, places the keyframe `offset` frames earlier (offsets
// rotate over 0..n-1), runs the scheme on that clip and scores the labeled
// frame's prediction.
inline OffsetAccuracy evaluate_rotating(const VideoSequence& video, const MotionSource* motion, const TaskHead& head,
                                        const ScheduleConfig& cfg, const std::vector<int>& labeled) {
  require(video.has_labels(), "evaluation needs ground-truth labels");
  const int n = cfg.scheme == Scheme::baseline ? 1 : cfg.interval;
  const auto frames = eligible_frames(labeled, n, video.size());
  require(!frames.empty(), "no labeled frames fit the keyframe interval");
  std::map<int, ConfusionMatrix> by_offset;
  for (const auto& a : rotate_offset_eval(frames, n)) {
    const int last = cfg.scheme == Scheme::interp && n > 1 ? a.keyframe + n : a.frame;
    const VideoSequence clip = video.slice(a.keyframe, last);
    const PipelineResult r = run_scheme(clip, motion, head, cfg, a.keyframe);
    const auto& seg = r.segmentations[static_cast<std::size_t>(a.offset)];
    auto it = by_offset.try_emplace(a.offset, head.num_classes).first;
    it->second.add((*video.labels)[static_cast<std::size_t>(a.frame)], seg.labels);
  }
  return aggregate_offsets(by_offset, head.num_classes);
}

}  // namespace mvseg
