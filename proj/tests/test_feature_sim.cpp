#include <random>

#include <gtest/gtest.h>

#include "mvseg/extractor.hpp"
#include "mvseg/synth.hpp"
#include "mvseg/task_head.hpp"

using namespace mvseg;

namespace {

ExtractorConfig oracle_cfg(int classes, double sigma = 0.0) {
  ExtractorConfig cfg;
  cfg.kind = ExtractorKind::oracle;
  cfg.num_classes = classes;
  cfg.noise_sigma = sigma;
  return cfg;
}

// Each 16x16 cell has a dominant class on 3/4 of its pixels.
LabelMap blocky_labels(int w, int h, int classes, std::mt19937& rng) {
  LabelMap m(w, h);
  for (int gy = 0; gy < h / 16; ++gy) {
    for (int gx = 0; gx < w / 16; ++gx) {
      const int dom = static_cast<int>(rng() % classes);
      for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 16; ++x) {
          const bool minor = (x + 16 * y) % 4 == 0;
          m.at(gx * 16 + x, gy * 16 + y) = static_cast<std::uint8_t>(minor ? rng() % classes : dom);
        }
      }
    }
  }
  return m;
}

TaskHead identity_head(int in, int classes, int stride = 16) {
  TaskHead h;
  h.in_channels = in;
  h.hidden = classes;
  h.num_classes = classes;
  h.stride = stride;
  h.projection.assign(static_cast<std::size_t>(classes) * in, 0.0f);
  for (int i = 0; i < classes; ++i) h.projection[static_cast<std::size_t>(i) * in + i] = 1.0f;
  h.projection_bias.assign(static_cast<std::size_t>(classes), 0.0f);
  h.scoring.assign(static_cast<std::size_t>(classes) * classes, 0.0f);
  for (int i = 0; i < classes; ++i) h.scoring[static_cast<std::size_t>(i) * classes + i] = 1.0f;
  h.scoring_bias.assign(static_cast<std::size_t>(classes), 0.0f);
  return h;
}

std::vector<int> cell_argmax(const FeatureMap& f, const TaskHead& head) {
  auto scores = apply_pointwise(relu(project(f, head)), head.scoring, head.scoring_bias, head.num_classes);
  std::vector<int> out(scores.plane());
  for (std::size_t i = 0; i < scores.plane(); ++i) {
    int best = 0;
    for (int c = 1; c < head.num_classes; ++c) {
      if (scores.values[c * scores.plane() + i] > scores.values[best * scores.plane() + i]) best = c;
    }
    out[i] = best;
  }
  return out;
}

}  // namespace

TEST(OracleExtractor, OneHotAndFractions) {
  LabelMap labels(32, 16, 2);
  for (int y = 0; y < 16; ++y) {
    for (int x = 16; x < 24; ++x) labels.at(x, y) = 0;
    for (int x = 24; x < 32; ++x) labels.at(x, y) = 1;
  }
  Frame frame(32, 16, 3);
  auto f = extract_features(frame, &labels, oracle_cfg(4));
  ASSERT_EQ(f.channels, 4);
  ASSERT_EQ(f.grid_w, 2);
  ASSERT_EQ(f.grid_h, 1);
  EXPECT_EQ(f.at(0, 0, 0), 0.0f);
  EXPECT_EQ(f.at(2, 0, 0), 1.0f);
  EXPECT_EQ(f.at(0, 0, 1), 0.5f);
  EXPECT_EQ(f.at(1, 0, 1), 0.5f);
  EXPECT_EQ(f.at(2, 0, 1), 0.0f);
  EXPECT_EQ(f.at(3, 0, 1), 0.0f);
}

TEST(OracleExtractor, RequiresLabels) {
  Frame frame(32, 32, 3);
  EXPECT_THROW(extract_features(frame, nullptr, oracle_cfg(2)), PreconditionError);
  LabelMap wrong(16, 16);
  EXPECT_THROW(extract_features(frame, &wrong, oracle_cfg(2)), PreconditionError);
}

TEST(OracleExtractor, NoiseIsSeededPerFrame) {
  std::mt19937 rng(1);
  auto labels = blocky_labels(64, 64, 3, rng);
  Frame frame(64, 64, 3);
  auto cfg = oracle_cfg(3, 0.1);
  auto a = extract_features(frame, &labels, cfg, 4);
  EXPECT_EQ(a, extract_features(frame, &labels, cfg, 4));
  EXPECT_NE(a, extract_features(frame, &labels, cfg, 5));
  auto clean = extract_features(frame, &labels, oracle_cfg(3));
  double sum = 0, sq = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = a.values[i] - clean.values[i];
    sum += d;
    sq += d * d;
  }
  const double n = static_cast<double>(a.values.size());
  EXPECT_NEAR(sum / n, 0.0, 0.05);
  EXPECT_NEAR(std::sqrt(sq / n), 0.1, 0.03);
}

TEST(HandcraftExtractor, ConstantFrameIsUniform) {
  Frame frame(48, 32, 3);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 48; ++x) {
      frame.at(x, y, 0) = 100;
      frame.at(x, y, 1) = 150;
      frame.at(x, y, 2) = 200;
    }
  }
  ExtractorConfig cfg;
  cfg.kind = ExtractorKind::handcraft;
  cfg.channels = 12;
  auto f = extract_features(frame, nullptr, cfg);
  ASSERT_EQ(f.channels, 12);
  // Luma 0.299*100 + 0.587*150 + 0.114*200 = 140.75 falls in histogram bin 2.
  const std::vector<float> expected{100 / 255.f, 150 / 255.f, 200 / 255.f, 0, 0, 1, 0, 0, 0, 0, 0, 0};
  for (int c = 0; c < 12; ++c) {
    for (int y = 0; y < f.grid_h; ++y) {
      for (int x = 0; x < f.grid_w; ++x) {
        EXPECT_NEAR(f.at(c, y, x), expected[static_cast<std::size_t>(c)], 1e-4) << "channel " << c;
        EXPECT_EQ(f.at(c, y, x), f.at(c, 0, 0));
      }
    }
  }
}

TEST(HandcraftExtractor, TruncatesAndStaysNonNegative) {
  auto seq = generate_synthetic(benchmark_scene(1, 4, 64, 64));
  ExtractorConfig cfg;
  cfg.kind = ExtractorKind::handcraft;
  cfg.channels = 5;
  auto f5 = extract_features(seq.frames[0], nullptr, cfg);
  cfg.channels = 16;
  auto f16 = extract_features(seq.frames[0], nullptr, cfg);
  ASSERT_EQ(f5.channels, 5);
  for (std::size_t i = 0; i < f5.values.size(); ++i) EXPECT_EQ(f5.values[i], f16.values[i]);
  for (float v : f16.values) EXPECT_GE(v, 0.0f);
  EXPECT_TRUE(all_finite(f16));
}

TEST(TaskHead, ZeroFeaturesGiveUniformSoftmax) {
  auto head = identity_head(4, 4);
  FeatureMap f(4, 2, 3, 16);
  auto seg = run_task_head(f, head, true);
  ASSERT_EQ(seg.width, 48);
  ASSERT_EQ(seg.height, 32);
  for (float p : seg.probabilities) EXPECT_NEAR(p, 0.25f, 1e-7);
}

TEST(TaskHead, OneByOneGridUpsamplesToConstant) {
  auto head = identity_head(3, 3);
  FeatureMap f(3, 1, 1, 16);
  f.at(0, 0, 0) = 0.2f;
  f.at(1, 0, 0) = 0.9f;
  f.at(2, 0, 0) = 0.1f;
  auto seg = run_task_head(f, head, true);
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < 256; ++i) EXPECT_EQ(seg.probabilities[c * 256 + i], seg.probabilities[c * 256]);
  }
  for (auto l : seg.labels) EXPECT_EQ(l, 1);
}

TEST(TaskHead, SelectingProjectionReproducesCellMajority) {
  std::mt19937 rng(2);
  const int C = 4;
  auto labels = blocky_labels(96, 64, C, rng);
  Frame frame(96, 64, 3);
  auto oracle = extract_features(frame, &labels, oracle_cfg(C));
  // A = 2C: oracle channels followed by C distractor channels.
  FeatureMap f(2 * C, oracle.grid_h, oracle.grid_w, 16);
  std::uniform_real_distribution<float> junk(0.0f, 5.0f);
  for (std::size_t i = 0; i < oracle.values.size(); ++i) f.values[i] = oracle.values[i];
  for (std::size_t i = oracle.values.size(); i < f.values.size(); ++i) f.values[i] = junk(rng);
  auto head = identity_head(2 * C, C);
  auto seg = run_task_head(f, head);
  auto majority = cell_majority(labels, 16, C);
  for (int gy = 0; gy < f.grid_h; ++gy) {
    for (int gx = 0; gx < f.grid_w; ++gx) {
      EXPECT_EQ(seg.at(gx * 16 + 8, gy * 16 + 8), majority[static_cast<std::size_t>(gy) * f.grid_w + gx]);
    }
  }
}

TEST(TaskHead, SoftmaxSumsToOne) {
  std::mt19937 rng(3);
  std::normal_distribution<float> g(0.0f, 3.0f);
  TaskHead head = identity_head(6, 5);
  for (auto& w : head.projection) w = g(rng);
  for (auto& w : head.scoring) w = g(rng);
  for (auto& w : head.scoring_bias) w = g(rng);
  head.hidden = 5;
  FeatureMap f(6, 3, 4, 16);
  for (auto& v : f.values) v = g(rng);
  auto seg = run_task_head(f, head, true);
  const std::size_t npix = static_cast<std::size_t>(seg.width) * seg.height;
  for (std::size_t i = 0; i < npix; ++i) {
    double s = 0;
    for (int c = 0; c < 5; ++c) {
      EXPECT_GE(seg.probabilities[c * npix + i], 0.0f);
      s += seg.probabilities[c * npix + i];
    }
    ASSERT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(TaskHead, ArgmaxInvariantToPositiveScaling) {
  std::mt19937 rng(4);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::normal_distribution<float> g(0.0f, 1.0f);
  TaskHead head = identity_head(6, 4);
  head.hidden = 4;
  for (auto& w : head.projection) w = u(rng);
  for (auto& w : head.scoring) w = g(rng);
  for (int trial = 0; trial < 10; ++trial) {
    FeatureMap f(6, 2, 2, 16);
    for (auto& v : f.values) v = u(rng);
    FeatureMap scaled = f;
    const float c = 0.1f + 5.0f * u(rng);
    for (auto& v : scaled.values) v *= c;
    EXPECT_EQ(run_task_head(f, head).labels, run_task_head(scaled, head).labels);
  }
}

TEST(TaskHead, UpsamplingIsExactAtGridPoints) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (int s : {1, 3, 5}) {
    FeatureMap g(2, 4, 3, s);
    for (auto& v : g.values) v = u(rng);
    auto up = upsample_bilinear(g);
    const int W = g.grid_w * s, H = g.grid_h * s;
    for (int c = 0; c < 2; ++c) {
      for (int gy = 0; gy < g.grid_h; ++gy) {
        for (int gx = 0; gx < g.grid_w; ++gx) {
          // (y + 0.5)/s - 0.5 = gy  <=>  y = gy*s + (s-1)/2
          const int y = gy * s + (s - 1) / 2, x = gx * s + (s - 1) / 2;
          EXPECT_FLOAT_EQ(up[(static_cast<std::size_t>(c) * H + y) * W + x], g.at(c, gy, gx));
        }
      }
    }
  }
}

TEST(TaskHead, RejectsChannelMismatch) {
  auto head = identity_head(4, 4);
  FeatureMap f(3, 2, 2, 16);
  EXPECT_THROW(run_task_head(f, head), PreconditionError);
}

TEST(FitTaskHead, OracleFeaturesFitAlmostPerfectly) {
  auto seq = generate_synthetic(benchmark_scene(20, 11));
  auto cfg = oracle_cfg(5);
  std::vector<FeatureMap> feats;
  std::vector<LabelMap> labels;
  for (int i = 0; i < seq.size(); i += 5) {
    feats.push_back(extract_features(seq.frames[i], &(*seq.labels)[i], cfg, i));
    labels.push_back((*seq.labels)[i]);
  }
  HeadFitParams params;
  params.num_classes = 5;
  params.lambda = 1e-9;
  auto head = fit_task_head(feats, labels, params);
  std::size_t correct = 0, total = 0;
  for (std::size_t k = 0; k < feats.size(); ++k) {
    auto pred = cell_argmax(feats[k], head);
    auto truth = cell_majority(labels[k], 16, 5);
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == truth[i];
    total += pred.size();
  }
  EXPECT_GE(static_cast<double>(correct) / total, 0.99);
}

TEST(FitTaskHead, HugeLambdaGivesUniformPredictions) {
  std::mt19937 rng(6);
  auto labels = blocky_labels(64, 64, 3, rng);
  Frame frame(64, 64, 3);
  auto f = extract_features(frame, &labels, oracle_cfg(3));
  HeadFitParams params;
  params.num_classes = 3;
  params.lambda = 1e12;
  auto head = fit_task_head({f}, {labels}, params);
  for (float w : head.scoring) EXPECT_NEAR(w, 0.0f, 1e-9);
  for (float b : head.scoring_bias) EXPECT_NEAR(b, 0.0f, 1e-9);
  auto seg = run_task_head(f, head, true);
  for (float p : seg.probabilities) EXPECT_NEAR(p, 1.0f / 3.0f, 1e-6);
}

TEST(FitTaskHead, DeterministicGivenSeed) {
  auto seq = generate_synthetic(benchmark_scene(2, 12, 64, 64));
  ExtractorConfig cfg;
  cfg.kind = ExtractorKind::handcraft;
  cfg.channels = 16;
  auto f = extract_features(seq.frames[0], nullptr, cfg);
  HeadFitParams params;
  params.num_classes = 5;
  params.seed = 9;
  auto a = fit_task_head({f}, {(*seq.labels)[0]}, params);
  auto b = fit_task_head({f}, {(*seq.labels)[0]}, params);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.hidden, 8);
  params.seed = 10;
  EXPECT_NE(fit_task_head({f}, {(*seq.labels)[0]}, params).projection, a.projection);
  EXPECT_THROW(fit_task_head({}, {}, params), PreconditionError);
}

TEST(Persistence, HeadAndFeatureFiles) {
  auto head = identity_head(4, 3);
  head.scoring_bias = {0.5f, -1.25f, 3.0f};
  auto bytes = encode_head(head);
  EXPECT_EQ(decode_head(bytes, "x"), head);
  bytes.pop_back();
  EXPECT_THROW(decode_head(bytes, "x"), FormatError);

  FeatureMap f(2, 3, 4, 16);
  for (std::size_t i = 0; i < f.values.size(); ++i) f.values[i] = static_cast<float>(i) * 0.37f - 1.0f;
  auto fb = encode_fmap(f);
  EXPECT_EQ(fb.size(), 20 + f.values.size() * 4);
  EXPECT_EQ(decode_fmap(fb, "x"), f);
  fb[0] = 'G';
  EXPECT_THROW(decode_fmap(fb, "x"), FormatError);
}
