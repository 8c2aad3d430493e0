#include <filesystem>
#include <unistd.h>

#include <gtest/gtest.h>

#include "mvseg/eval.hpp"
#include "mvseg/frame_io.hpp"
#include "mvseg/pipeline.hpp"
#include "mvseg/synth.hpp"

using namespace mvseg;

namespace {

struct Fixture {
  VideoSequence video;
  TaskHead head;
  ScheduleConfig cfg;
};

Fixture make_fixture(const SceneSpec& spec) {
  Fixture fx;
  fx.video = generate_synthetic(spec);
  fx.cfg.extractor.kind = ExtractorKind::oracle;
  fx.cfg.extractor.num_classes = spec.num_classes;
  std::vector<FeatureMap> feats;
  std::vector<LabelMap> labels;
  for (int i = 0; i < fx.video.size(); i += 3) {
    feats.push_back(extract_features(fx.video.frames[i], &(*fx.video.labels)[i], fx.cfg.extractor, i));
    labels.push_back((*fx.video.labels)[i]);
  }
  HeadFitParams params;
  params.num_classes = spec.num_classes;
  fx.head = fit_task_head(feats, labels, params);
  return fx;
}

ScheduleConfig with(ScheduleConfig cfg, Scheme s, int n) {
  cfg.scheme = s;
  cfg.interval = n;
  return cfg;
}

std::vector<std::vector<std::uint8_t>> labels_of(const PipelineResult& r) {
  std::vector<std::vector<std::uint8_t>> out;
  for (const auto& s : r.segmentations) out.push_back(s.labels);
  return out;
}

}  // namespace

TEST(Pipeline, OneFrameBaseline) {
  auto fx = make_fixture(benchmark_scene(1, 3, 64, 48, 3, 2));
  auto r = run_baseline(fx.video, fx.head, fx.cfg);
  ASSERT_EQ(r.segmentations.size(), 1u);
  EXPECT_EQ(r.counters.warps, 0);
  EXPECT_EQ(r.counters.extractions, 1);
  EXPECT_EQ(r.delay, 0);
}

TEST(Pipeline, IntervalOneDegeneratesToBaseline) {
  auto fx = make_fixture(benchmark_scene(12, 3, 96, 64, 4, 3));
  MemoryMotionSource motion(encode_motion(fx.video, {}));
  auto base = run_baseline(fx.video, fx.head, fx.cfg);
  auto prop = run_propagation(fx.video, motion, fx.head, with(fx.cfg, Scheme::prop, 1));
  auto interp = run_interpolation(fx.video, motion, fx.head, with(fx.cfg, Scheme::interp, 1));
  EXPECT_EQ(labels_of(prop), labels_of(base));
  EXPECT_EQ(labels_of(interp), labels_of(base));
  EXPECT_EQ(interp.delay, 0);
  EXPECT_EQ(prop.counters.warps, 0);
  EXPECT_EQ(interp.counters.warps, 0);
}

TEST(Pipeline, KeyframesMatchBaseline) {
  auto fx = make_fixture(benchmark_scene(23, 4, 96, 64, 4, 3));
  MemoryMotionSource motion(encode_motion(fx.video, {}));
  auto base = run_baseline(fx.video, fx.head, fx.cfg);
  for (int n : {2, 5, 10}) {
    for (auto s : {Scheme::prop, Scheme::interp}) {
      auto r = run_scheme(fx.video, &motion, fx.head, with(fx.cfg, s, n));
      for (int i = 0; i < fx.video.size(); i += n) {
        EXPECT_EQ(r.segmentations[i].labels, base.segmentations[i].labels) << to_string(s) << " n=" << n << " i=" << i;
      }
      for (int i = 0; i < fx.video.size(); ++i) EXPECT_EQ(r.offsets[i], i % n);
    }
  }
}

TEST(Pipeline, StaticVideoIsFixpoint) {
  auto spec = benchmark_scene(11, 5, 64, 64, 3, 2);
  spec.pan_x = spec.pan_y = 0;
  for (auto& s : spec.sprites) s.vx = s.vy = 0;
  auto fx = make_fixture(spec);
  MemoryMotionSource motion(encode_motion(fx.video, {}));
  auto base = run_baseline(fx.video, fx.head, fx.cfg);
  for (int n : {2, 3, 4, 10}) {
    for (auto s : {Scheme::prop, Scheme::interp}) {
      auto r = run_scheme(fx.video, &motion, fx.head, with(fx.cfg, s, n));
      EXPECT_EQ(labels_of(r), labels_of(base)) << to_string(s) << " n=" << n;
    }
  }
}

TEST(Pipeline, WorkCounters) {
  auto fx = make_fixture(benchmark_scene(31, 6, 64, 48, 3, 2));
  MemoryMotionSource motion(encode_motion(fx.video, {}));
  const int T = fx.video.size();
  for (int n : {2, 3, 5, 10}) {
    const int keys = (T + n - 1) / n;
    auto prop = run_propagation(fx.video, motion, fx.head, with(fx.cfg, Scheme::prop, n));
    EXPECT_EQ(prop.counters.extractions, keys);
    EXPECT_EQ(prop.counters.warps, T - keys);
    EXPECT_EQ(prop.counters.head_runs, T);

    auto interp = run_interpolation(fx.video, motion, fx.head, with(fx.cfg, Scheme::interp, n));
    EXPECT_EQ(interp.counters.extractions, keys);
    int full = 0, tail = 0;
    for (int k = 0; k < T; k += n) {
      if (k + n <= T - 1) {
        ++full;
      } else {
        tail = T - 1 - k;
      }
    }
    EXPECT_EQ(interp.counters.warps, 2 * (n - 1) * full + tail) << "n=" << n;
    EXPECT_EQ(interp.counters.fusions, (n - 1) * full);
    EXPECT_EQ(interp.delay, n);
  }
}

TEST(Pipeline, WarpDistance) {
  auto fx = make_fixture(benchmark_scene(41, 6, 64, 48, 3, 2));
  MemoryMotionSource motion(encode_motion(fx.video, {}));
  for (int n : {2, 4, 5, 8, 10}) {
    auto prop = run_propagation(fx.video, motion, fx.head, with(fx.cfg, Scheme::prop, n));
    auto interp = run_interpolation(fx.video, motion, fx.head, with(fx.cfg, Scheme::interp, n));
    const int full_end = ((fx.video.size() - 1) / n) * n;
    int prop_max = 0, interp_max = 0;
    double prop_sum = 0, interp_sum = 0;
    int count = 0;
    for (int i = 0; i < full_end; ++i) {
      if (i % n == 0) continue;
      prop_max = std::max(prop_max, prop.warp_distance[i]);
      interp_max = std::max(interp_max, interp.warp_distance[i]);
      prop_sum += prop.warp_distance[i];
      interp_sum += interp.warp_distance[i];
      ++count;
    }
    EXPECT_EQ(prop_max, n - 1);
    EXPECT_EQ(interp_max, n / 2);
    EXPECT_LE(interp_sum / count, prop_sum / count);
  }
}

TEST(Pipeline, HandUnrolledInterpolationTrace) {
  auto fx = make_fixture(benchmark_scene(7, 8, 96, 64, 4, 3));
  MemoryMotionSource motion(encode_motion(fx.video, {}));
  auto cfg = with(fx.cfg, Scheme::interp, 3);
  auto r = run_interpolation(fx.video, motion, fx.head, cfg);

  auto feat = [&](int i) { return extract_features(fx.video.frames[i], &(*fx.video.labels)[i], cfg.extractor, i); };
  auto fwd = [&](int i) { return mv_to_field(motion.forward(i), 16); };
  auto bwd = [&](int i) { return mv_to_field(motion.backward(i), 16); };
  auto f0 = feat(0), f3 = feat(3), f6 = feat(6);
  // Window k=0: W_f = [f0, w(f0,fwd1), w(.,fwd2)], W_b = [f3, w(f3,bwd2), w(.,bwd1)].
  auto wf1 = warp_features(f0, fwd(1)), wf2 = warp_features(wf1, fwd(2));
  auto wb1 = warp_features(f3, bwd(2)), wb2 = warp_features(wb1, bwd(1));
  auto expect = [&](int i, const FeatureMap& ff, const FeatureMap& fb, double a) {
    EXPECT_EQ(r.segmentations[i].labels, run_task_head(fuse(ff, fb, a, cfg.fusion), fx.head).labels) << "frame " << i;
  };
  expect(1, wf1, wb2, 2.0 / 3.0);
  expect(2, wf2, wb1, 1.0 / 3.0);
  auto wf4 = warp_features(f3, fwd(4)), wf5 = warp_features(wf4, fwd(5));
  auto wb5 = warp_features(f6, bwd(5)), wb4 = warp_features(wb5, bwd(4));
  expect(4, wf4, wb4, 2.0 / 3.0);
  expect(5, wf5, wb5, 1.0 / 3.0);
  EXPECT_EQ(r.segmentations[6].labels, run_task_head(f6, fx.head).labels);
}

TEST(Pipeline, TailFallsBackToForwardPropagation) {
  auto fx = make_fixture(benchmark_scene(6, 9, 64, 48, 3, 2));
  MemoryMotionSource motion(encode_motion(fx.video, {}));
  auto interp = run_interpolation(fx.video, motion, fx.head, with(fx.cfg, Scheme::interp, 4));
  auto prop = run_propagation(fx.video, motion, fx.head, with(fx.cfg, Scheme::prop, 4));
  EXPECT_EQ(interp.segmentations[5].labels, prop.segmentations[5].labels);
  EXPECT_EQ(interp.warp_distance[5], 1);
}

TEST(Pipeline, NegateModeUsesForwardMotion) {
  auto fx = make_fixture(benchmark_scene(9, 10, 64, 48, 3, 2));
  auto set = encode_motion(fx.video, {}, false);
  MemoryMotionSource forward_only(set);
  auto cfg = with(fx.cfg, Scheme::interp, 4);
  EXPECT_THROW(run_interpolation(fx.video, forward_only, fx.head, cfg), PreconditionError);
  cfg.backward = BackwardMode::negate;
  auto neg = run_interpolation(fx.video, forward_only, fx.head, cfg);
  MotionSet flipped = set;
  for (int i = 0; i + 1 < fx.video.size(); ++i) flipped.backward[i] = negated(*set.forward[i + 1]);
  MemoryMotionSource explicit_source(flipped);
  cfg.backward = BackwardMode::estimate;
  EXPECT_EQ(labels_of(neg), labels_of(run_interpolation(fx.video, explicit_source, fx.head, cfg)));
}

TEST(Pipeline, MissingSidecarNamesFrame) {
  auto fx = make_fixture(benchmark_scene(6, 11, 64, 48, 3, 2));
  auto dir = std::filesystem::temp_directory_path() / ("mvseg_sidecar_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  auto set = encode_motion(fx.video, {});
  for (int i = 1; i < fx.video.size(); ++i) {
    if (i != 4) write_mvec(dir / forward_sidecar_name(i), *set.forward[i]);
  }
  SidecarMotionSource sidecars(dir);
  try {
    run_propagation(fx.video, sidecars, fx.head, with(fx.cfg, Scheme::prop, 6));
    FAIL() << "expected a missing-sidecar error";
  } catch (const PreconditionError& e) {
    EXPECT_NE(std::string(e.what()).find("frame 4"), std::string::npos) << e.what();
  }
  std::filesystem::remove_all(dir);
}

TEST(Pipeline, SidecarsMatchInMemoryMotion) {
  auto fx = make_fixture(benchmark_scene(8, 12, 64, 48, 3, 2));
  auto dir = std::filesystem::temp_directory_path() / ("mvseg_sidecar_rt_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  auto set = encode_motion(fx.video, {});
  for (int i = 0; i < fx.video.size(); ++i) {
    if (set.forward[i]) write_mvec(dir / forward_sidecar_name(i), *set.forward[i]);
    if (set.backward[i]) write_mvec(dir / backward_sidecar_name(i), *set.backward[i]);
  }
  SidecarMotionSource sidecars(dir);
  MemoryMotionSource memory(set);
  EstimatingMotionSource estimating(fx.video, {});
  auto cfg = with(fx.cfg, Scheme::interp, 3);
  auto a = run_interpolation(fx.video, sidecars, fx.head, cfg);
  auto b = run_interpolation(fx.video, memory, fx.head, cfg);
  auto c = run_interpolation(fx.video, estimating, fx.head, cfg);
  EXPECT_EQ(labels_of(a), labels_of(b));
  EXPECT_EQ(labels_of(a), labels_of(c));
  EXPECT_GT(a.timing.motion_read, 0.0);
  EXPECT_GT(c.timing.motion_estimate, 0.0);
  std::filesystem::remove_all(dir);
}

TEST(Pipeline, TimingIsConsistent) {
  auto fx = make_fixture(benchmark_scene(10, 13, 64, 48, 3, 2));
  EstimatingMotionSource motion(fx.video, {});
  auto r = run_interpolation(fx.video, motion, fx.head, with(fx.cfg, Scheme::interp, 3));
  const auto& t = r.timing;
  for (double v : {t.feature_extraction, t.motion_read, t.motion_estimate, t.field_conversion, t.warp, t.fusion,
                   t.task_head}) {
    EXPECT_GE(v, 0.0);
  }
  for (double v : t.frame_seconds) EXPECT_GE(v, 0.0);
  EXPECT_GE(t.inference_total(), t.attributed() * (1 - 1e-9));
}

TEST(Pipeline, RejectsMismatchedHead) {
  auto fx = make_fixture(benchmark_scene(2, 14, 64, 48, 3, 2));
  auto cfg = fx.cfg;
  cfg.extractor.num_classes = 4;
  EXPECT_THROW(run_baseline(fx.video, fx.head, cfg), PreconditionError);
  EXPECT_THROW(run_scheme(fx.video, nullptr, fx.head, with(fx.cfg, Scheme::prop, 2)), PreconditionError);
}

TEST(Pipeline, BaselineOnAlignedStripesIsNearPerfect) {
  SceneSpec spec;
  spec.width = 128;
  spec.height = 64;
  spec.frames = 4;
  spec.num_classes = 3;
  for (auto [x, w, cls] : {std::array{16, 16, 2}, std::array{48, 32, 1}, std::array{96, 16, 2}}) {
    Sprite s;
    s.class_id = cls;
    s.x = x;
    s.w = w;
    s.h = 64;
    spec.sprites.push_back(s);
  }
  auto fx = make_fixture(spec);
  auto r = run_baseline(fx.video, fx.head, fx.cfg);
  EXPECT_GE(miou(r.segmentations, *fx.video.labels, 3), 0.99);
}

TEST(RotateOffsets, Enumeration) {
  std::vector<int> ten(10);
  for (int i = 0; i < 10; ++i) ten[i] = 20 + 3 * i;
  auto a = rotate_offset_eval(ten, 5);
  for (int j = 0; j < 10; ++j) {
    EXPECT_EQ(a[j].offset, j % 5);
    EXPECT_EQ(a[j].keyframe, ten[j] - j % 5);
  }
  for (const auto& x : rotate_offset_eval(ten, 1)) EXPECT_EQ(x.offset, 0);
  std::map<int, int> counts;
  for (const auto& x : rotate_offset_eval({1, 2, 3, 4, 5, 6, 7}, 3)) ++counts[x.offset];
  EXPECT_EQ(counts, (std::map<int, int>{{0, 3}, {1, 2}, {2, 2}}));
  EXPECT_THROW(rotate_offset_eval(ten, 0), PreconditionError);
}
