// mvseg: synthesize sequences, encode block motion, run and benchmark the
// keyframe schemes, and report accuracy-throughput curves.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mvseg/mvseg.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mvseg;

namespace {

constexpr const char* kDatasetFile = "dataset.json";
constexpr const char* kEncodeFile = "encode.json";
constexpr const char* kManifestFile = "manifest.json";

struct Options {
  // synth
  std::string spec;
  std::string preset;
  int frames = 100;
  std::string format = "ppm";
  // shared
  std::string in;
  std::string out;
  std::string motion_dir;
  std::uint64_t seed = 0;
  int block_size = 16;
  int radius = 16;
  bool no_backward = false;
  // schedule
  std::string scheme = "baseline";
  int interval = 1;
  std::string fusion = "avg";
  std::string fusion_weights;
  std::string extractor = "oracle";
  std::string backward = "estimate";
  bool include_ingest = false;
  int channels = 16;
  double noise = 0.0;
  int classes = 0;
  // head
  std::string head;
  double lambda = 1e-3;
  int fit_every = 1;
  // eval / bench / report
  int label_every = 1;
  std::string sweep = "1..10";
  std::string schemes = "baseline,prop,interp";
  std::vector<std::string> runs;
};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t video_digest(const VideoSequence& v) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& f : v.frames) h = fnv1a(f.data.data(), f.data.size(), h);
  if (v.labels) {
    for (const auto& l : *v.labels) h = fnv1a(l.labels.data(), l.labels.size(), h);
  }
  return h;
}

void write_json(const fs::path& p, const json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw PreconditionError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

std::vector<int> parse_sweep(const std::string& s) {
  std::vector<int> out;
  try {
    if (auto dots = s.find(".."); dots != std::string::npos) {
      const int lo = std::stoi(s.substr(0, dots)), hi = std::stoi(s.substr(dots + 2));
      for (int n = lo; n <= hi; ++n) out.push_back(n);
    } else {
      std::stringstream ss(s);
      std::string item;
      while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
    }
  } catch (const std::logic_error&) {
    throw PreconditionError("bad sweep '" + s + "' (use 1..10 or 2,5,10)");
  }
  require(!out.empty(), "empty sweep '" + s + "'");
  for (int n : out) require(n >= 1, "sweep intervals must be >= 1");
  return out;
}

std::vector<Scheme> parse_schemes(const std::string& s) {
  std::vector<Scheme> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_scheme(item));
  require(!out.empty(), "no schemes given");
  return out;
}

// ---------------------------------------------------------------------------

struct Context {
  Context(const Options& o, VideoSequence v) : opt(o), video(std::move(v)) {}

  const Options& opt;
  VideoSequence video;
  int num_classes = 0;
  ExtractorConfig extractor;
  SearchParams search;
  std::unique_ptr<MotionSource> motion;
  std::string motion_kind;
  TaskHead head;
  std::string head_origin;
  std::uint64_t dataset_digest = 0;
};

int infer_classes(const Options& opt, const VideoSequence& video) {
  if (opt.classes > 0) return opt.classes;
  if (fs::exists(fs::path(opt.in) / kDatasetFile)) {
    const auto j = read_json(fs::path(opt.in) / kDatasetFile);
    if (j.contains("num_classes")) return j.at("num_classes").get<int>();
  }
  require(video.has_labels(), "cannot infer the class count without labels; pass --classes");
  int c = 0;
  for (const auto& l : *video.labels) {
    for (auto v : l.labels) c = std::max(c, v + 1);
  }
  return c;
}

std::unique_ptr<Context> load_context(const Options& opt, bool need_motion) {
  require(!opt.in.empty(), "--in is required");
  auto ctx = std::make_unique<Context>(opt, load_sequence(opt.in));
  ctx->num_classes = infer_classes(opt, ctx->video);
  ctx->dataset_digest = video_digest(ctx->video);
  ctx->extractor.kind = parse_extractor(opt.extractor);
  ctx->extractor.num_classes = ctx->num_classes;
  ctx->extractor.channels = opt.channels;
  ctx->extractor.noise_sigma = opt.noise;
  ctx->extractor.seed = opt.seed;
  ctx->search.block_size = opt.block_size;
  ctx->search.radius = opt.radius;

  if (need_motion) {
    const fs::path dir = opt.motion_dir.empty() ? fs::path(opt.in) : fs::path(opt.motion_dir);
    if (fs::exists(dir / forward_sidecar_name(1)) || ctx->video.size() == 1) {
      ctx->motion = std::make_unique<SidecarMotionSource>(dir);
      ctx->motion_kind = "sidecar";
      if (fs::exists(dir / kEncodeFile)) {
        const auto enc = read_json(dir / kEncodeFile);
        ctx->search.block_size = enc.value("block_size", ctx->search.block_size);
        ctx->search.radius = enc.value("radius", ctx->search.radius);
      }
    } else if (!opt.motion_dir.empty()) {
      throw PreconditionError("no motion sidecars in " + dir.string() + " (missing " + forward_sidecar_name(1) + ")");
    } else {
      ctx->motion = std::make_unique<EstimatingMotionSource>(ctx->video, ctx->search);
      ctx->motion_kind = "estimate";
    }
  }

  if (!opt.head.empty()) {
    ctx->head = read_head(opt.head);
    ctx->head_origin = opt.head;
  } else {
    HeadFitParams params;
    params.num_classes = ctx->num_classes;
    params.lambda = opt.lambda;
    params.seed = opt.seed;
    ctx->head = fit_head_on_video(ctx->video, ctx->extractor, params, opt.fit_every);
    ctx->head_origin = "fitted";
  }
  require(ctx->head.num_classes == ctx->num_classes, "task head class count does not match the data");
  return ctx;
}

ScheduleConfig schedule(const Context& ctx, Scheme scheme, int n) {
  ScheduleConfig cfg;
  cfg.scheme = scheme;
  cfg.interval = scheme == Scheme::baseline ? 1 : n;
  cfg.backward = parse_backward(ctx.opt.backward);
  cfg.fusion.op = parse_fusion(ctx.opt.fusion);
  cfg.extractor = ctx.extractor;
  if (scheme == Scheme::interp && cfg.fusion.op == FusionOp::conv && cfg.interval > 1) {
    if (!ctx.opt.fusion_weights.empty()) {
      cfg.fusion.conv = read_fusion_weights(ctx.opt.fusion_weights);
    } else {
      cfg.fusion.conv = fit_conv_fusion(fusion_training_samples(ctx.video, *ctx.motion, cfg), ctx.opt.lambda);
    }
  }
  return cfg;
}

json settings_json(const Context& ctx, const ScheduleConfig& cfg) {
  const auto& o = ctx.opt;
  return {{"scheme", to_string(cfg.scheme)},
          {"interval", cfg.interval},
          {"fusion", to_string(cfg.fusion.op)},
          {"fusion_weights", o.fusion_weights.empty() ? (cfg.fusion.conv ? "fitted" : "") : o.fusion_weights},
          {"backward", to_string(cfg.backward)},
          {"extractor", to_string(cfg.extractor.kind)},
          {"channels", cfg.extractor.feature_channels()},
          {"stride", cfg.extractor.stride},
          {"noise_sigma", cfg.extractor.noise_sigma},
          {"seed", o.seed},
          {"block_size", ctx.search.block_size},
          {"radius", ctx.search.radius},
          {"include_ingest_time", o.include_ingest},
          {"lambda", o.lambda},
          {"fit_every", o.fit_every},
          {"head", ctx.head_origin},
          {"head_digest", hex64(fnv1a(encode_head(ctx.head).data(), encode_head(ctx.head).size()))},
          {"motion_source", ctx.motion_kind}};
}

json dataset_json(const Context& ctx) {
  return {{"path", ctx.opt.in},
          {"frames", ctx.video.size()},
          {"width", ctx.video.width()},
          {"height", ctx.video.height()},
          {"num_classes", ctx.num_classes},
          {"digest", hex64(ctx.dataset_digest)}};
}

json timing_json(const PipelineResult& r, bool include_ingest) {
  const auto& t = r.timing;
  json j = {{"feature_extraction_s", t.feature_extraction},
            {"motion_read_s", t.motion_read},
            {"motion_estimate_s", t.motion_estimate},
            {"field_conversion_s", t.field_conversion},
            {"warp_s", t.warp},
            {"fusion_s", t.fusion},
            {"task_head_s", t.task_head},
            {"inference_s", t.inference_total()}};
  const auto tp = measure_throughput(r, include_ingest);
  j["fps"] = tp.fps;
  j["shares"] = tp.shares;
  const auto cm = measured_cost_model(r);
  j["t_key_ms"] = cm.t_key;
  j["t_inter_ms"] = cm.t_inter;
  return j;
}

struct RunOutcome {
  json manifest;
  CurveRow row;
};

RunOutcome execute(const Context& ctx, Scheme scheme, int n, const std::optional<fs::path>& seg_dir) {
  const ScheduleConfig cfg = schedule(ctx, scheme, n);
  const PipelineResult r = run_scheme(ctx.video, ctx.motion.get(), ctx.head, cfg);
  const auto tp = measure_throughput(r, ctx.opt.include_ingest);

  RunOutcome out;
  auto& m = out.manifest;
  m["settings"] = settings_json(ctx, cfg);
  m["dataset"] = dataset_json(ctx);
  m["delay_frames"] = r.delay;
  m["counters"] = {{"extractions", r.counters.extractions},
                   {"warps", r.counters.warps},
                   {"fusions", r.counters.fusions},
                   {"head_runs", r.counters.head_runs},
                   {"motion_fetches", r.counters.motion_fetches}};
  m["segmentation_digest"] = hex64(segmentation_digest(r.segmentations));
  m["timing"] = timing_json(r, ctx.opt.include_ingest);
  out.row = {to_string(r.scheme), r.interval, 0.0, 0.0, tp.fps, r.delay};
  if (ctx.video.has_labels()) {
    const auto acc = per_offset_accuracy(r, *ctx.video.labels, ctx.num_classes);
    json per = json::object();
    for (const auto& [p, v] : acc.per_offset) per[std::to_string(p)] = v;
    m["accuracy"] = {{"miou_avg", acc.avg}, {"miou_min", acc.min}, {"per_offset", per}};
    out.row.miou_avg = acc.avg;
    out.row.miou_min = acc.min;
  }
  if (seg_dir) {
    fs::create_directories(*seg_dir);
    for (std::size_t i = 0; i < r.segmentations.size(); ++i) {
      write_pgm(*seg_dir / numbered_name("seg_%06d.pgm", static_cast<int>(i)), r.segmentations[i].as_label_map());
    }
  }
  return out;
}

std::string run_name(Scheme s, int n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_n%02d", to_string(s).c_str(), n);
  return buf;
}

// ---------------------------------------------------------------------------
// Subcommands.

int cmd_synth(const Options& o) {
  require(!o.out.empty(), "--out is required");
  SceneSpec spec;
  if (!o.spec.empty()) {
    try {
      spec = read_json(o.spec).get<SceneSpec>();
    } catch (const json::exception& e) {
      throw FormatError(o.spec + ": " + e.what());
    }
  } else if (o.preset == "benchmark") {
    spec = benchmark_scene(o.frames, o.seed);
  } else {
    throw PreconditionError("give --spec FILE or --preset benchmark");
  }
  validate(spec);
  const auto format = o.format == "mvsq" ? SequenceFormat::mvsq : SequenceFormat::ppm;
  require(o.format == "ppm" || o.format == "mvsq", "--format must be ppm or mvsq");
  const auto video = generate_synthetic(spec);
  store_sequence(video, o.out, format);
  write_json(fs::path(o.out) / kDatasetFile, {{"spec", spec},
                                              {"format", o.format},
                                              {"frames", video.size()},
                                              {"num_classes", spec.num_classes},
                                              {"digest", hex64(video_digest(video))}});
  std::cout << "wrote " << video.size() << " frames (" << video.width() << "x" << video.height() << ") to " << o.out
            << '\n';
  return 0;
}

int cmd_encode(const Options& o) {
  require(!o.in.empty(), "--in is required");
  const auto video = load_sequence(o.in);
  const fs::path dir = o.out.empty() ? fs::path(o.in) : fs::path(o.out);
  fs::create_directories(dir);
  SearchParams params;
  params.block_size = o.block_size;
  params.radius = o.radius;
  double magnitude = 0, zeros = 0;
  int maps = 0;
  auto record = [&](const MotionVectorMap& mv) {
    const auto s = motion_stats(mv);
    magnitude += s.mean_magnitude;
    zeros += s.zero_fraction;
    ++maps;
  };
  for (int i = 1; i < video.size(); ++i) {
    const auto fwd = estimate_motion(video.frames[i - 1], video.frames[i], params);
    write_mvec(dir / forward_sidecar_name(i), fwd);
    record(fwd);
    if (!o.no_backward) {
      const auto bwd = estimate_motion(video.frames[i], video.frames[i - 1], params);
      write_mvec(dir / backward_sidecar_name(i - 1), bwd);
      record(bwd);
    }
  }
  json summary = {{"frames", video.size()},
                  {"block_size", params.block_size},
                  {"radius", params.radius},
                  {"backward", !o.no_backward},
                  {"maps", maps},
                  {"mean_magnitude", maps ? magnitude / maps : 0.0},
                  {"zero_block_fraction", maps ? zeros / maps : 1.0}};
  write_json(dir / kEncodeFile, summary);
  std::cout << "encoded " << maps << " motion maps, mean |mv| " << summary["mean_magnitude"].get<double>()
            << " px, zero blocks " << 100.0 * summary["zero_block_fraction"].get<double>() << "%\n";
  return 0;
}

int cmd_train(const Options& o) {
  require(!o.out.empty(), "--out is required");
  const auto ctx = load_context(o, o.fusion == "conv");
  write_head(o.out, ctx->head);
  std::cout << "task head " << ctx->head.in_channels << " -> " << ctx->head.hidden << " -> " << ctx->head.num_classes
            << " written to " << o.out << '\n';
  if (o.fusion == "conv" && !o.fusion_weights.empty()) {
    ScheduleConfig cfg = schedule(*ctx, Scheme::prop, o.interval);
    require(cfg.interval >= 2, "conv fusion training needs --interval >= 2");
    cfg.backward = parse_backward(o.backward);
    write_fusion_weights(o.fusion_weights, fit_conv_fusion(fusion_training_samples(ctx->video, *ctx->motion, cfg), o.lambda));
    std::cout << "conv fusion weights written to " << o.fusion_weights << '\n';
  }
  return 0;
}

int cmd_run(const Options& o) {
  const auto scheme = parse_scheme(o.scheme);
  const auto ctx = load_context(o, scheme != Scheme::baseline);
  std::optional<fs::path> seg_dir;
  if (!o.out.empty()) seg_dir = fs::path(o.out);
  auto result = execute(*ctx, scheme, o.interval, seg_dir);
  if (!o.out.empty()) write_json(fs::path(o.out) / kManifestFile, result.manifest);
  std::cout << result.manifest.dump(2) << '\n';
  return 0;
}

int cmd_eval(const Options& o) {
  const auto scheme = parse_scheme(o.scheme);
  require(o.label_every >= 1, "--label-every must be >= 1");
  const auto ctx = load_context(o, scheme != Scheme::baseline);
  require(ctx->video.has_labels(), "evaluation needs ground-truth labels");
  const ScheduleConfig cfg = schedule(*ctx, scheme, o.interval);
  std::vector<int> labeled;
  for (int i = 0; i < ctx->video.size(); i += o.label_every) labeled.push_back(i);
  const auto acc = evaluate_rotating(ctx->video, ctx->motion.get(), ctx->head, cfg, labeled);
  json per = json::object();
  for (const auto& [p, v] : acc.per_offset) per[std::to_string(p)] = v;
  json j = {{"settings", settings_json(*ctx, cfg)},
            {"dataset", dataset_json(*ctx)},
            {"label_every", o.label_every},
            {"evaluated_frames", eligible_frames(labeled, cfg.interval, ctx->video.size()).size()},
            {"accuracy", {{"miou_avg", acc.avg}, {"miou_min", acc.min}, {"per_offset", per}}}};
  if (!o.out.empty()) write_json(o.out, j);
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_bench(const Options& o) {
  require(!o.out.empty(), "--out is required");
  const auto sweep = parse_sweep(o.sweep);
  const auto schemes = parse_schemes(o.schemes);
  bool needs_motion = false;
  for (auto s : schemes) needs_motion = needs_motion || s != Scheme::baseline;
  const auto ctx = load_context(o, needs_motion);
  std::vector<CurveRow> rows;
  for (auto s : schemes) {
    const std::vector<int> ns = s == Scheme::baseline ? std::vector<int>{1} : sweep;
    for (int n : ns) {
      auto result = execute(*ctx, s, n, std::nullopt);
      write_json(fs::path(o.out) / "runs" / run_name(s, n) / kManifestFile, result.manifest);
      rows.push_back(result.row);
      std::cout << run_name(s, n) << "  miou_avg " << result.row.miou_avg << "  miou_min " << result.row.miou_min
                << "  fps " << result.row.fps << '\n';
    }
  }
  write_text(fs::path(o.out) / "curve.csv", emit_curve(rows));
  std::cout << rows.size() << " runs, curve written to " << (fs::path(o.out) / "curve.csv").string() << '\n';
  return 0;
}

// Settings that must agree across merged manifests.
json comparable(const json& m) {
  json s = m.at("settings");
  for (const char* k : {"scheme", "interval", "fusion_weights"}) s.erase(k);
  return {{"settings", s}, {"dataset", m.at("dataset")}};
}

int cmd_report(const Options& o) {
  require(!o.runs.empty(), "--runs is required");
  std::vector<fs::path> manifests;
  for (const auto& r : o.runs) {
    const fs::path p(r);
    if (fs::is_regular_file(p)) {
      manifests.push_back(p);
    } else if (fs::is_directory(p / "runs")) {
      for (const auto& e : fs::directory_iterator(p / "runs")) {
        if (fs::exists(e.path() / kManifestFile)) manifests.push_back(e.path() / kManifestFile);
      }
    } else if (fs::exists(p / kManifestFile)) {
      manifests.push_back(p / kManifestFile);
    } else {
      throw PreconditionError("no manifests under " + p.string());
    }
  }
  std::sort(manifests.begin(), manifests.end());
  require(!manifests.empty(), "no manifests found");
  std::vector<CurveRow> rows;
  std::optional<json> reference;
  std::map<std::pair<std::string, int>, fs::path> seen;
  for (const auto& p : manifests) {
    const auto m = read_json(p);
    try {
      const auto key = comparable(m);
      if (!reference) {
        reference = key;
      } else if (key != *reference) {
        throw PreconditionError("mismatched manifests: " + p.string() + " differs from " + manifests.front().string());
      }
      CurveRow row;
      row.scheme = m.at("settings").at("scheme").get<std::string>();
      row.n = m.at("settings").at("interval").get<int>();
      row.fps = m.at("timing").at("fps").get<double>();
      row.delay_frames = m.at("delay_frames").get<int>();
      if (m.contains("accuracy")) {
        row.miou_avg = m.at("accuracy").at("miou_avg").get<double>();
        row.miou_min = m.at("accuracy").at("miou_min").get<double>();
      }
      if (auto [it, fresh] = seen.emplace(std::pair{row.scheme, row.n}, p); !fresh) {
        throw PreconditionError("duplicate run " + row.scheme + " n=" + std::to_string(row.n) + " in " + p.string() +
                                " and " + it->second.string());
      }
      rows.push_back(row);
    } catch (const json::exception& e) {
      throw FormatError(p.string() + ": " + e.what());
    }
  }
  const auto csv = emit_curve(rows);
  if (!o.out.empty()) write_text(o.out, csv);
  std::cout << csv;
  return 0;
}

void add_schedule_flags(CLI::App* c, Options& o) {
  c->add_option("--scheme", o.scheme, "baseline, prop or interp")->check(CLI::IsMember({"baseline", "prop", "interp"}));
  c->add_option("--interval,-n", o.interval, "keyframe interval")->check(CLI::PositiveNumber);
}

void add_model_flags(CLI::App* c, Options& o) {
  c->add_option("--in", o.in, "sequence directory")->required();
  c->add_option("--motion", o.motion_dir, "motion sidecar directory (default: --in, estimating if absent)");
  c->add_option("--fusion", o.fusion, "interp fusion operator")->check(CLI::IsMember({"max", "avg", "conv"}));
  c->add_option("--fusion-weights", o.fusion_weights, "conv fusion weights file");
  c->add_option("--extractor", o.extractor, "feature extractor")->check(CLI::IsMember({"oracle", "handcraft"}));
  c->add_option("--backward", o.backward, "backward motion: estimate or negate")
      ->check(CLI::IsMember({"estimate", "negate"}));
  c->add_flag("--include-ingest-time", o.include_ingest, "count motion acquisition in throughput");
  c->add_option("--seed", o.seed, "seed for extractor noise and head projection");
  c->add_option("--block-size", o.block_size, "block size when estimating motion");
  c->add_option("--radius", o.radius, "search radius when estimating motion");
  c->add_option("--channels", o.channels, "handcraft feature channels");
  c->add_option("--noise", o.noise, "oracle feature noise sigma");
  c->add_option("--classes", o.classes, "class count (default: from dataset.json or labels)");
  c->add_option("--head", o.head, "task head file (default: fit on the sequence)");
  c->add_option("--lambda", o.lambda, "ridge coefficient for fitting");
  c->add_option("--fit-every", o.fit_every, "fit the head on every k-th frame");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Segmentation with block-motion feature propagation and interpolation"};
  app.set_config("--config", "", "TOML/INI file with option defaults (flags override it)");
  app.require_subcommand(1);
  Options o;

  auto* synth = app.add_subcommand("synth", "generate a synthetic labeled sequence");
  synth->add_option("--spec", o.spec, "scene spec JSON");
  synth->add_option("--preset", o.preset, "built-in scene instead of --spec")->check(CLI::IsMember({"benchmark"}));
  synth->add_option("--frames", o.frames, "frame count for --preset");
  synth->add_option("--seed", o.seed, "seed for --preset");
  synth->add_option("--out", o.out, "output directory")->required();
  synth->add_option("--format", o.format, "ppm or mvsq")->check(CLI::IsMember({"ppm", "mvsq"}));

  auto* encode = app.add_subcommand("encode", "estimate forward and backward block motion sidecars");
  encode->add_option("--in", o.in, "sequence directory")->required();
  encode->add_option("--out", o.out, "sidecar directory (default: --in)");
  encode->add_option("--block-size", o.block_size, "block size");
  encode->add_option("--radius", o.radius, "search radius");
  encode->add_flag("--no-backward", o.no_backward, "skip backward sidecars");

  auto* train = app.add_subcommand("train", "fit a task head (and optionally conv fusion weights)");
  add_model_flags(train, o);
  train->add_option("--interval,-n", o.interval, "interval for conv fusion training");
  train->add_option("--out", o.out, "head output file")->required();

  auto* run = app.add_subcommand("run", "run one scheme over a sequence");
  add_model_flags(run, o);
  add_schedule_flags(run, o);
  run->add_option("--out", o.out, "directory for segmentations and manifest");

  auto* eval = app.add_subcommand("eval", "avg/min mIoU with rotating keyframe offsets");
  add_model_flags(eval, o);
  add_schedule_flags(eval, o);
  eval->add_option("--label-every", o.label_every, "treat every k-th frame as labeled");
  eval->add_option("--out", o.out, "JSON result file");

  auto* bench = app.add_subcommand("bench", "sweep intervals and schemes, timing each run");
  add_model_flags(bench, o);
  bench->add_option("--sweep", o.sweep, "intervals, e.g. 1..10 or 2,5,10");
  bench->add_option("--schemes", o.schemes, "comma-separated schemes");
  bench->add_option("--out", o.out, "output directory")->required();

  auto* report = app.add_subcommand("report", "merge run manifests into a curve CSV");
  report->add_option("--runs", o.runs, "bench directories, run directories or manifest files")->required();
  report->add_option("--out", o.out, "CSV file (default: stdout only)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth) return cmd_synth(o);
    if (*encode) return cmd_encode(o);
    if (*train) return cmd_train(o);
    if (*run) return cmd_run(o);
    if (*eval) return cmd_eval(o);
    if (*bench) return cmd_bench(o);
    if (*report) return cmd_report(o);
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const PreconditionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
