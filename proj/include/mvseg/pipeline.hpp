#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mvseg/block_motion.hpp"
#include "mvseg/extractor.hpp"
#include "mvseg/fusion.hpp"
#include "mvseg/task_head.hpp"
#include "mvseg/warp.hpp"

namespace mvseg {

enum class Scheme { baseline, prop, interp };
enum class BackwardMode { estimate, negate };

inline std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::baseline: return "baseline";
    case Scheme::prop: return "prop";
    case Scheme::interp: return "interp";
  }
  return "?";
}

inline Scheme parse_scheme(const std::string& s) {
  if (s == "baseline") return Scheme::baseline;
  if (s == "prop") return Scheme::prop;
  if (s == "interp") return Scheme::interp;
  throw PreconditionError("unknown scheme '" + s + "'");
}

inline std::string to_string(BackwardMode m) { return m == BackwardMode::estimate ? "estimate" : "negate"; }

inline BackwardMode parse_backward(const std::string& s) {
  if (s == "estimate") return BackwardMode::estimate;
  if (s == "negate") return BackwardMode::negate;
  throw PreconditionError("unknown backward mode '" + s + "'");
}

// ---------------------------------------------------------------------------
// Motion sources. Indices are absolute frame indices of the full sequence.

class MotionSource {
 public:
  virtual ~MotionSource() = default;
  // Frame i matched against frame i - 1.
  virtual MotionVectorMap forward(int i) const = 0;
  // Frame i matched against frame i + 1.
  virtual MotionVectorMap backward(int i) const = 0;
  virtual bool has_backward() const = 0;
  // True when maps are computed on demand rather than read.
  virtual bool estimates() const { return false; }
};

struct MotionSet {
  std::vector<std::optional<MotionVectorMap>> forward;
  std::vector<std::optional<MotionVectorMap>> backward;
};

// Encoder pass: forward and backward maps for every consecutive pair.
inline MotionSet encode_motion(const VideoSequence& video, const SearchParams& params, bool with_backward = true) {
  MotionSet set;
  set.forward.resize(static_cast<std::size_t>(video.size()));
  set.backward.resize(static_cast<std::size_t>(video.size()));
  for (int i = 1; i < video.size(); ++i) {
    set.forward[static_cast<std::size_t>(i)] = estimate_motion(video.frames[i - 1], video.frames[i], params);
    if (with_backward) {
      set.backward[static_cast<std::size_t>(i - 1)] = estimate_motion(video.frames[i], video.frames[i - 1], params);
    }
  }
  return set;
}

class MemoryMotionSource : public MotionSource {
 public:
  explicit MemoryMotionSource(MotionSet set) : set_(std::move(set)) {}
  MotionVectorMap forward(int i) const override { return get(set_.forward, i, "forward"); }
  MotionVectorMap backward(int i) const override { return get(set_.backward, i, "backward"); }
  bool has_backward() const override {
    for (const auto& m : set_.backward) {
      if (m) return true;
    }
    return false;
  }

 private:
  static MotionVectorMap get(const std::vector<std::optional<MotionVectorMap>>& v, int i, const char* what) {
    if (i < 0 || i >= static_cast<int>(v.size()) || !v[static_cast<std::size_t>(i)]) {
      throw PreconditionError(std::string("missing ") + what + " motion for frame " + std::to_string(i));
    }
    return *v[static_cast<std::size_t>(i)];
  }
  MotionSet set_;
};

class SidecarMotionSource : public MotionSource {
 public:
  explicit SidecarMotionSource(std::filesystem::path dir) : dir_(std::move(dir)) {}
  MotionVectorMap forward(int i) const override { return load(forward_sidecar_name(i), i, "forward"); }
  MotionVectorMap backward(int i) const override { return load(backward_sidecar_name(i), i, "backward"); }
  bool has_backward() const override { return std::filesystem::exists(dir_ / backward_sidecar_name(0)); }

 private:
  MotionVectorMap load(const std::string& name, int i, const char* what) const {
    const auto p = dir_ / name;
    if (!std::filesystem::exists(p)) {
      throw PreconditionError(std::string("missing ") + what + " motion sidecar for frame " + std::to_string(i) +
                              " (" + p.string() + ")");
    }
    return read_mvec(p);
  }
  std::filesystem::path dir_;
};

class EstimatingMotionSource : public MotionSource {
 public:
  EstimatingMotionSource(const VideoSequence& video, SearchParams params) : video_(video), params_(params) {}
  MotionVectorMap forward(int i) const override {
    require(i >= 1 && i < video_.size(), "no forward motion for frame " + std::to_string(i));
    return estimate_motion(video_.frames[i - 1], video_.frames[i], params_);
  }
  MotionVectorMap backward(int i) const override {
    require(i >= 0 && i + 1 < video_.size(), "no backward motion for frame " + std::to_string(i));
    return estimate_motion(video_.frames[i + 1], video_.frames[i], params_);
  }
  bool has_backward() const override { return true; }
  bool estimates() const override { return true; }

 private:
  const VideoSequence& video_;
  SearchParams params_;
};

// ---------------------------------------------------------------------------

struct ScheduleConfig {
  Scheme scheme = Scheme::baseline;
  int interval = 1;
  BackwardMode backward = BackwardMode::estimate;
  FusionConfig fusion;
  ExtractorConfig extractor;
};

// Wall-time per stage in seconds. Motion acquisition (ingest) is kept out of
// the per-frame inference totals.
struct TimingBreakdown {
  double feature_extraction = 0;
  double motion_read = 0;
  double motion_estimate = 0;
  double field_conversion = 0;
  double warp = 0;
  double fusion = 0;
  double task_head = 0;
  std::vector<double> frame_seconds;         // inference time attributed to each frame
  std::vector<double> frame_ingest_seconds;  // motion acquisition per frame

  double ingest() const { return motion_read + motion_estimate; }
  double attributed() const { return feature_extraction + field_conversion + warp + fusion + task_head; }
  double inference_total() const {
    double s = 0;
    for (double v : frame_seconds) s += v;
    return s;
  }
};

struct WorkCounters {
  std::int64_t extractions = 0;
  std::int64_t warps = 0;
  std::int64_t fusions = 0;
  std::int64_t head_runs = 0;
  std::int64_t motion_fetches = 0;
};

struct PipelineResult {
  Scheme scheme = Scheme::baseline;
  int interval = 1;
  std::vector<SegmentationMap> segmentations;
  std::vector<int> offsets;         // i mod n
  std::vector<int> warp_distance;   // steps from the keyframe whose features dominate
  int delay = 0;                    // frames of lookahead
  TimingBreakdown timing;
  WorkCounters counters;
};

struct Model {
  ExtractorConfig extractor;
  TaskHead head;
};

namespace detail {

using Clock = std::chrono::steady_clock;

class StageTimer {
 public:
  explicit StageTimer(double& acc) : acc_(acc), start_(Clock::now()) {}
  ~StageTimer() { acc_ += std::chrono::duration<double>(Clock::now() - start_).count(); }
  StageTimer(const StageTimer&) = delete;
  StageTimer& operator=(const StageTimer&) = delete;

 private:
  double& acc_;
  Clock::time_point start_;
};

// Shared machinery for the three schemes. Frames are indexed locally;
// `index_base` maps them to absolute indices for motion lookup and noise keys.
class Runner {
 public:
  Runner(const VideoSequence& video, const MotionSource* motion, const ScheduleConfig& cfg, const TaskHead& head,
         int index_base)
      : video_(video), motion_(motion), cfg_(cfg), head_(head), base_(index_base) {
    validate(video);
    head.validate();
    require(cfg.interval >= 1, "keyframe interval must be >= 1");
    require(cfg.extractor.feature_channels() == head.in_channels, "extractor channels do not match the task head");
    require(cfg.extractor.stride == head.stride, "extractor stride does not match the task head");
    result_.scheme = cfg.scheme;
    result_.interval = cfg.scheme == Scheme::baseline ? 1 : cfg.interval;
    const auto T = static_cast<std::size_t>(video.size());
    result_.segmentations.resize(T);
    result_.offsets.resize(T);
    result_.warp_distance.resize(T, 0);
    result_.timing.frame_seconds.resize(T, 0.0);
    result_.timing.frame_ingest_seconds.resize(T, 0.0);
    if (cfg.scheme == Scheme::interp && cfg.fusion.op == FusionOp::conv) {
      if (!cfg.fusion.conv) throw PreconditionError("conv fusion selected without weights");
      folded_ = fold_into_projection(*cfg.fusion.conv, head);
    }
  }

  PipelineResult& result() { return result_; }
  int size() const { return video_.size(); }
  int interval() const { return result_.interval; }

  FeatureMap extract(int i) {
    StageTimer t(result_.timing.feature_extraction);
    ++result_.counters.extractions;
    const LabelMap* labels = video_.labels ? &(*video_.labels)[static_cast<std::size_t>(i)] : nullptr;
    return extract_features(video_.frames[static_cast<std::size_t>(i)], labels, cfg_.extractor,
                            static_cast<std::uint64_t>(base_ + i));
  }

  void segment(int i, const FeatureMap& f) {
    StageTimer t(result_.timing.task_head);
    ++result_.counters.head_runs;
    result_.segmentations[static_cast<std::size_t>(i)] = run_task_head(f, head_);
  }

  void segment_projected(int i, const FeatureMap& pre) {
    StageTimer t(result_.timing.task_head);
    ++result_.counters.head_runs;
    result_.segmentations[static_cast<std::size_t>(i)] = run_head_from_projection(pre, head_);
  }

  DisplacementField forward_field(int i) {
    return field(fetch([&] { return motion().forward(base_ + i); }), WarpDirection::forward);
  }

  DisplacementField backward_field(int i) {
    if (cfg_.backward == BackwardMode::negate) {
      return field(fetch([&] { return negated(motion().forward(base_ + i + 1)); }), WarpDirection::backward);
    }
    if (!motion().has_backward()) throw PreconditionError("interpolation needs backward motion (none available)");
    return field(fetch([&] { return motion().backward(base_ + i); }), WarpDirection::backward);
  }

  FeatureMap warp(const FeatureMap& f, const DisplacementField& d) {
    StageTimer t(result_.timing.warp);
    ++result_.counters.warps;
    return warp_features(f, d);
  }

  std::vector<FeatureMap> propagate_timed(const FeatureMap& f, const std::vector<DisplacementField>& fields) {
    StageTimer t(result_.timing.warp);
    result_.counters.warps += static_cast<std::int64_t>(fields.size());
    return propagate(f, static_cast<int>(fields.size()), fields);
  }

  // Fuses and segments frame i; conv fusion runs folded into the projection.
  void fuse_and_segment(int i, const FeatureMap& ff, const FeatureMap& fb, double alpha) {
    ++result_.counters.fusions;
    if (folded_) {
      FeatureMap pre;
      {
        StageTimer t(result_.timing.fusion);
        pre = fuse_projected(ff, fb, alpha, *folded_);
      }
      segment_projected(i, pre);
      return;
    }
    FeatureMap fused;
    {
      StageTimer t(result_.timing.fusion);
      fused = fuse(ff, fb, alpha, cfg_.fusion);
    }
    segment(i, fused);
  }

  // Runs `body` as frame i's work, charging elapsed time minus ingest to it.
  template <typename Fn>
  void frame(int i, Fn&& body) {
    const double ingest_before = result_.timing.ingest();
    const auto start = Clock::now();
    body();
    const double elapsed = std::chrono::duration<double>(Clock::now() - start).count();
    const double ingest = result_.timing.ingest() - ingest_before;
    result_.timing.frame_seconds[static_cast<std::size_t>(i)] += elapsed - ingest;
    result_.timing.frame_ingest_seconds[static_cast<std::size_t>(i)] += ingest;
  }

 private:
  const MotionSource& motion() const {
    if (motion_ == nullptr) throw PreconditionError("this scheme needs motion vectors");
    return *motion_;
  }

  template <typename Fn>
  MotionVectorMap fetch(Fn&& get) {
    ++result_.counters.motion_fetches;
    StageTimer t(motion().estimates() ? result_.timing.motion_estimate : result_.timing.motion_read);
    return get();
  }

  DisplacementField field(const MotionVectorMap& mv, WarpDirection dir) {
    StageTimer t(result_.timing.field_conversion);
    require(mv.grid_w * mv.block_size == video_.width() && mv.grid_h * mv.block_size == video_.height(),
            "motion vector map does not match the frame size");
    return mv_to_field(mv, cfg_.extractor.stride, dir);
  }

  const VideoSequence& video_;
  const MotionSource* motion_;
  const ScheduleConfig& cfg_;
  const TaskHead& head_;
  int base_;
  std::optional<FoldedFusion> folded_;
  PipelineResult result_;
};

}  // namespace detail

// S_i = N_task(N_feat(I_i)) for every frame.
inline PipelineResult run_baseline(const VideoSequence& video, const TaskHead& head, const ScheduleConfig& cfg,
                                   int index_base = 0) {
  ScheduleConfig c = cfg;
  c.scheme = Scheme::baseline;
  detail::Runner run(video, nullptr, c, head, index_base);
  for (int i = 0; i < run.size(); ++i) {
    run.frame(i, [&] { run.segment(i, run.extract(i)); });
  }
  run.result().delay = 0;
  return std::move(run.result());
}

// Keyframes (i mod n == 0) extract features; other frames warp the cached
// features one step along their forward motion. The cache always holds the
// features used for the latest frame.
inline PipelineResult run_propagation(const VideoSequence& video, const MotionSource& motion, const TaskHead& head,
                                      const ScheduleConfig& cfg, int index_base = 0) {
  ScheduleConfig c = cfg;
  c.scheme = Scheme::prop;
  detail::Runner run(video, &motion, c, head, index_base);
  const int n = run.interval();
  FeatureMap cached;
  for (int i = 0; i < run.size(); ++i) {
    const int p = i % n;
    run.result().offsets[static_cast<std::size_t>(i)] = p;
    run.result().warp_distance[static_cast<std::size_t>(i)] = p;
    run.frame(i, [&] {
      FeatureMap f = p == 0 ? run.extract(i) : run.warp(cached, run.forward_field(i));
      run.segment(i, f);
      cached = std::move(f);
    });
  }
  run.result().delay = 0;
  return std::move(run.result());
}

// Per keyframe k: features of k and k + n (the latter reused as the next
// window's keyframe features), n - 1 forward warps of f_k and n - 1 backward
// warps of f_{k+n}, then relevance-weighted fusion for each offset p. A final
// window without a next keyframe falls back to forward propagation.
inline PipelineResult run_interpolation(const VideoSequence& video, const MotionSource& motion, const TaskHead& head,
                                        const ScheduleConfig& cfg, int index_base = 0) {
  ScheduleConfig c = cfg;
  c.scheme = Scheme::interp;
  detail::Runner run(video, &motion, c, head, index_base);
  const int n = run.interval(), T = run.size();
  std::optional<FeatureMap> next_key;
  for (int k = 0; k < T; k += n) {
    std::vector<FeatureMap> wf, wb;
    const bool full_window = k + n <= T - 1;
    run.frame(k, [&] {
      FeatureMap fk = next_key ? std::move(*next_key) : run.extract(k);
      next_key.reset();
      run.segment(k, fk);
      if (n == 1) return;
      if (full_window) {
        FeatureMap fn = run.extract(k + n);
        std::vector<DisplacementField> fwd, bwd;
        for (int j = k + 1; j <= k + n - 1; ++j) fwd.push_back(run.forward_field(j));
        for (int j = k + n - 1; j >= k + 1; --j) bwd.push_back(run.backward_field(j));
        wf = run.propagate_timed(fk, fwd);
        wb = run.propagate_timed(fn, bwd);
        next_key = std::move(fn);
      } else {
        std::vector<DisplacementField> fwd;
        for (int j = k + 1; j <= T - 1; ++j) fwd.push_back(run.forward_field(j));
        wf = run.propagate_timed(fk, fwd);
      }
    });
    for (int p = 1; p < n && k + p < T; ++p) {
      const int i = k + p;
      run.result().offsets[static_cast<std::size_t>(i)] = p;
      run.frame(i, [&] {
        if (full_window) {
          run.result().warp_distance[static_cast<std::size_t>(i)] = std::min(p, n - p);
          const double alpha = relevance_weights(n, p).first;
          run.fuse_and_segment(i, wf[static_cast<std::size_t>(p)], wb[static_cast<std::size_t>(n - p)], alpha);
        } else {
          run.result().warp_distance[static_cast<std::size_t>(i)] = p;
          run.segment(i, wf[static_cast<std::size_t>(p)]);
        }
      });
    }
  }
  run.result().delay = n > 1 ? n : 0;
  return std::move(run.result());
}

inline PipelineResult run_scheme(const VideoSequence& video, const MotionSource* motion, const TaskHead& head,
                                 const ScheduleConfig& cfg, int index_base = 0) {
  switch (cfg.scheme) {
    case Scheme::baseline: return run_baseline(video, head, cfg, index_base);
    case Scheme::prop:
      if (motion == nullptr) throw PreconditionError("propagation needs motion vectors");
      return run_propagation(video, *motion, head, cfg, index_base);
    case Scheme::interp:
      if (motion == nullptr) throw PreconditionError("interpolation needs motion vectors");
      return run_interpolation(video, *motion, head, cfg, index_base);
  }
  throw PreconditionError("unknown scheme");
}

// Fits a head on every `every`-th labeled frame of the video.
inline TaskHead fit_head_on_video(const VideoSequence& video, const ExtractorConfig& extractor,
                                  const HeadFitParams& params, int every = 1) {
  require(video.has_labels(), "fitting a head needs ground-truth labels");
  require(every >= 1, "frame step must be >= 1");
  std::vector<FeatureMap> feats;
  std::vector<LabelMap> labels;
  for (int i = 0; i < video.size(); i += every) {
    feats.push_back(extract_features(video.frames[static_cast<std::size_t>(i)], &(*video.labels)[static_cast<std::size_t>(i)],
                                     extractor, static_cast<std::uint64_t>(i)));
    labels.push_back((*video.labels)[static_cast<std::size_t>(i)]);
  }
  return fit_task_head(feats, labels, params);
}

// Training pairs for conv fusion at interval n: for each full window, the
// forward and backward warped features at every offset with the frame's own
// features as target.
inline std::vector<FusionSample> fusion_training_samples(const VideoSequence& video, const MotionSource& motion,
                                                         const ScheduleConfig& cfg) {
  const int n = cfg.interval;
  require(n >= 2, "conv fusion training needs an interval of at least 2");
  std::vector<FusionSample> samples;
  auto feat = [&](int i) {
    const LabelMap* labels = video.labels ? &(*video.labels)[static_cast<std::size_t>(i)] : nullptr;
    return extract_features(video.frames[static_cast<std::size_t>(i)], labels, cfg.extractor,
                            static_cast<std::uint64_t>(i));
  };
  for (int k = 0; k + n <= video.size() - 1; k += n) {
    std::vector<DisplacementField> fwd, bwd;
    for (int j = k + 1; j <= k + n - 1; ++j) fwd.push_back(mv_to_field(motion.forward(j), cfg.extractor.stride));
    for (int j = k + n - 1; j >= k + 1; --j) {
      const auto mv = cfg.backward == BackwardMode::negate ? negated(motion.forward(j + 1)) : motion.backward(j);
      bwd.push_back(mv_to_field(mv, cfg.extractor.stride, WarpDirection::backward));
    }
    const auto wf = propagate(feat(k), n - 1, fwd);
    const auto wb = propagate(feat(k + n), n - 1, bwd);
    for (int p = 1; p < n; ++p) {
      samples.push_back({wf[static_cast<std::size_t>(p)], wb[static_cast<std::size_t>(n - p)],
                         relevance_weights(n, p).first, feat(k + p)});
    }
  }
  require(!samples.empty(), "video too short to collect fusion samples");
  return samples;
}

struct OffsetAssignment {
  int frame = 0;
  int offset = 0;
  int keyframe = 0;
};

// Labeled frame j (in order) gets offset j mod interval, so offsets rotate
// uniformly over 0..interval-1.
inline std::vector<OffsetAssignment> rotate_offset_eval(const std::vector<int>& labeled_frames, int interval) {
  require(interval >= 1, "interval must be >= 1");
  std::vector<OffsetAssignment> out;
  out.reserve(labeled_frames.size());
  for (std::size_t j = 0; j < labeled_frames.size(); ++j) {
    const int p = static_cast<int>(j % static_cast<std::size_t>(interval));
    out.push_back({labeled_frames[j], p, labeled_frames[j] - p});
  }
  return out;
}

// FNV-1a over every segmentation's labels, for compact determinism checks.
inline std::uint64_t segmentation_digest(const std::vector<SegmentationMap>& segs) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](std::uint8_t b) {
    h ^= b;
    h *= 0x100000001b3ULL;
  };
  for (const auto& s : segs) {
    for (int v : {s.width, s.height}) {
      for (int k = 0; k < 4; ++k) mix(static_cast<std::uint8_t>((v >> (8 * k)) & 0xff));
    }
    for (auto l : s.labels) mix(l);
  }
  return h;
}

}  // namespace mvseg
