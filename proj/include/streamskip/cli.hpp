#pragma once

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "streamskip/backend.hpp"
#include "streamskip/bench.hpp"
#include "streamskip/coherence.hpp"
#include "streamskip/core.hpp"
#include "streamskip/engine.hpp"
#include "streamskip/flow.hpp"
#include "streamskip/image_io.hpp"
#include "streamskip/knn.hpp"
#include "streamskip/synthetic.hpp"

namespace streamskip::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

struct PipelineConfig {
  std::string mode = "plain";  // plain | flowskip | knn | hybrid
  std::string profile = "sdturbo-coreml";
  std::optional<backend::LatencyProfile> stages;  // overrides the preset
  std::uint64_t seed = 7;
};

struct CoherenceConfig {
  bool enabled = true;
  float alpha = 0.3f;
  float beta = 0.4f;
  std::uint64_t seed = 42;
  float noise_strength = 0.1f;
};

struct FlowConfig {
  int n = 3;
  std::string resolution = "half";  // full | half
  flow::FlowParams params;
};

struct KnnConfig {
  std::size_t store_size = 256;
  std::size_t k = 4;
  std::string index = "flat";  // flat | ivfpq
  std::size_t nlist = 64;
  std::size_t nbits = 8;
  std::size_t nprobe = 8;
  float temperature = 0.0f;  // 0 = self-scaling (mean neighbor distance)
};

struct IoConfig {
  std::optional<std::string> input_dir;
  std::string output_dir = "out";
  synthetic::FrameSpec synthetic;
  std::size_t count = 64;
};

struct AppConfig {
  PipelineConfig pipeline;
  CoherenceConfig coherence;
  FlowConfig flow_cfg;
  KnnConfig knn_cfg;
  IoConfig io;
};

namespace detail {

inline void require_keys(const json& obj, const std::string& scope,
                         std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw std::invalid_argument("config section '" + scope +
                                                    "' must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw std::invalid_argument("unknown config key '" +
                                  (scope.empty() ? it.key() : scope + "." + it.key()) +
                                  "'");
  }
}

template <typename T>
inline void read_to(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

inline backend::LatencyProfile parse_stage_latencies(const json& obj,
                                                     const std::string& scope) {
  require_keys(obj, scope,
               {"preprocess_ms", "encode_ms", "denoise_ms", "decode_ms", "postprocess_ms"});
  backend::LatencyProfile p = backend::profile_preset("custom");
  read_to(obj, "preprocess_ms", p.preprocess_ms);
  read_to(obj, "encode_ms", p.encode_ms);
  read_to(obj, "denoise_ms", p.denoise_ms);
  read_to(obj, "decode_ms", p.decode_ms);
  read_to(obj, "postprocess_ms", p.postprocess_ms);
  return p;
}

}  // namespace detail

inline AppConfig parse_app_config(const json& doc) {
  AppConfig cfg;
  detail::require_keys(doc, "", {"pipeline", "coherence", "flow", "knn", "io"});
  if (doc.contains("pipeline")) {
    const json& p = doc.at("pipeline");
    detail::require_keys(p, "pipeline", {"mode", "profile", "stages", "seed"});
    detail::read_to(p, "mode", cfg.pipeline.mode);
    detail::read_to(p, "profile", cfg.pipeline.profile);
    detail::read_to(p, "seed", cfg.pipeline.seed);
    if (p.contains("stages"))
      cfg.pipeline.stages = detail::parse_stage_latencies(p.at("stages"), "pipeline.stages");
  }
  if (doc.contains("coherence")) {
    const json& c = doc.at("coherence");
    detail::require_keys(c, "coherence",
                         {"enabled", "alpha", "beta", "seed", "noise_strength"});
    detail::read_to(c, "enabled", cfg.coherence.enabled);
    detail::read_to(c, "alpha", cfg.coherence.alpha);
    detail::read_to(c, "beta", cfg.coherence.beta);
    detail::read_to(c, "seed", cfg.coherence.seed);
    detail::read_to(c, "noise_strength", cfg.coherence.noise_strength);
  }
  if (doc.contains("flow")) {
    const json& f = doc.at("flow");
    detail::require_keys(f, "flow",
                         {"n", "resolution", "window", "levels", "iterations", "poly_n",
                          "poly_sigma", "pyramid_scale"});
    detail::read_to(f, "n", cfg.flow_cfg.n);
    detail::read_to(f, "resolution", cfg.flow_cfg.resolution);
    detail::read_to(f, "window", cfg.flow_cfg.params.window_size);
    detail::read_to(f, "levels", cfg.flow_cfg.params.pyramid_levels);
    detail::read_to(f, "iterations", cfg.flow_cfg.params.iterations);
    detail::read_to(f, "poly_n", cfg.flow_cfg.params.poly_n);
    detail::read_to(f, "poly_sigma", cfg.flow_cfg.params.poly_sigma);
    detail::read_to(f, "pyramid_scale", cfg.flow_cfg.params.pyramid_scale);
    if (cfg.flow_cfg.resolution != "full" && cfg.flow_cfg.resolution != "half")
      throw std::invalid_argument("flow.resolution must be 'full' or 'half'");
  }
  if (doc.contains("knn")) {
    const json& k = doc.at("knn");
    detail::require_keys(
        k, "knn", {"store_size", "k", "index", "nlist", "nbits", "nprobe", "temperature"});
    detail::read_to(k, "store_size", cfg.knn_cfg.store_size);
    detail::read_to(k, "k", cfg.knn_cfg.k);
    detail::read_to(k, "index", cfg.knn_cfg.index);
    detail::read_to(k, "nlist", cfg.knn_cfg.nlist);
    detail::read_to(k, "nbits", cfg.knn_cfg.nbits);
    detail::read_to(k, "nprobe", cfg.knn_cfg.nprobe);
    detail::read_to(k, "temperature", cfg.knn_cfg.temperature);
    if (cfg.knn_cfg.index != "flat" && cfg.knn_cfg.index != "ivfpq")
      throw std::invalid_argument("knn.index must be 'flat' or 'ivfpq'");
  }
  if (doc.contains("io")) {
    const json& io = doc.at("io");
    detail::require_keys(io, "io", {"input_dir", "output_dir", "synthetic"});
    if (io.contains("input_dir") && !io.at("input_dir").is_null())
      cfg.io.input_dir = io.at("input_dir").get<std::string>();
    detail::read_to(io, "output_dir", cfg.io.output_dir);
    if (io.contains("synthetic")) {
      const json& s = io.at("synthetic");
      detail::require_keys(s, "io.synthetic",
                           {"pattern", "width", "height", "motion", "count", "seed"});
      if (s.contains("pattern"))
        cfg.io.synthetic.pattern =
            synthetic::pattern_from_string(s.at("pattern").get<std::string>());
      detail::read_to(s, "width", cfg.io.synthetic.width);
      detail::read_to(s, "height", cfg.io.synthetic.height);
      if (s.contains("motion")) {
        const json& m = s.at("motion");
        if (!m.is_array() || m.size() != 2)
          throw std::invalid_argument("io.synthetic.motion must be [dx, dy]");
        cfg.io.synthetic.motion_dx = m[0].get<double>();
        cfg.io.synthetic.motion_dy = m[1].get<double>();
      }
      detail::read_to(s, "count", cfg.io.count);
      if (s.contains("seed")) cfg.io.synthetic.seed.value = s.at("seed").get<std::uint64_t>();
    }
  }
  if (cfg.pipeline.mode != "plain" && cfg.pipeline.mode != "flowskip" &&
      cfg.pipeline.mode != "knn" && cfg.pipeline.mode != "hybrid")
    throw std::invalid_argument("pipeline.mode must be plain, flowskip, knn or hybrid");
  if (cfg.io.input_dir && !fs::is_directory(*cfg.io.input_dir))
    throw std::invalid_argument("input directory not found: " + *cfg.io.input_dir);
  return cfg;
}

inline AppConfig load_app_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open config file: " + path.string());
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::exception& e) {
    throw std::invalid_argument("config parse error in " + path.string() + ": " + e.what());
  }
  return parse_app_config(doc);
}

/// STREAMSKIP_SEED overrides every seed in the run for CI determinism.
inline std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("STREAMSKIP_SEED");
  if (!v || !*v) return std::nullopt;
  return std::strtoull(v, nullptr, 10);
}

inline void apply_env_seed(AppConfig& cfg) {
  if (auto s = env_seed()) {
    cfg.pipeline.seed = *s;
    cfg.coherence.seed = *s;
    cfg.io.synthetic.seed.value = *s;
  }
}

// ---------------------------------------------------------------------------
// Frame sources

class DirectorySource : public engine::FrameSource {
 public:
  explicit DirectorySource(const fs::path& dir) {
    if (!fs::is_directory(dir))
      throw std::invalid_argument("input directory not found: " + dir.string());
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".ppm")
        files_.push_back(e.path());
    std::sort(files_.begin(), files_.end());
  }

  std::size_t count() const { return files_.size(); }

  std::optional<FrameImage> next() override {
    if (pos_ >= files_.size()) return std::nullopt;
    FrameImage img = read_ppm(files_[pos_]);
    img.frame_id = pos_++;
    img.capture_timestamp_ns = engine::now_ns();
    return img;
  }

 private:
  std::vector<fs::path> files_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// run command

namespace detail {

inline std::vector<engine::StageSpec> build_run_chain(const AppConfig& cfg,
                                                      const backend::LatencyProfile& prof) {
  using backend::StageKind;
  using backend::StubStage;
  std::vector<engine::StageSpec> chain;
  chain.push_back({"preprocess",
                   std::make_shared<StubStage>(StageKind::preprocess, prof.preprocess_ms),
                   prof.preprocess_ms});
  chain.push_back({"encode", std::make_shared<StubStage>(StageKind::encode, prof.encode_ms),
                   prof.encode_ms});
  if (cfg.coherence.enabled)
    chain.push_back({"noise",
                     std::make_shared<coherence::NoiseStage>(coherence::NoiseConfig{
                         Seed{cfg.coherence.seed}, cfg.coherence.noise_strength}),
                     0.0});
  chain.push_back({"denoise",
                   std::make_shared<StubStage>(StageKind::denoise, prof.denoise_ms,
                                               Seed{cfg.pipeline.seed}),
                   prof.denoise_ms});
  if (cfg.coherence.enabled)
    chain.push_back({"feedback",
                     std::make_shared<coherence::FeedbackStage>(cfg.coherence.alpha), 0.0});
  chain.push_back({"decode", std::make_shared<StubStage>(StageKind::decode, prof.decode_ms),
                   prof.decode_ms});
  if (cfg.coherence.enabled)
    chain.push_back({"ema", std::make_shared<coherence::EmaStage>(cfg.coherence.beta), 0.0});
  chain.push_back({"postprocess",
                   std::make_shared<StubStage>(StageKind::postprocess, prof.postprocess_ms),
                   prof.postprocess_ms});
  return chain;
}

struct KnnRunContext {
  knn::VectorStore store;
  std::unique_ptr<backend::StubStage> pre, enc, dec, post;
  std::unique_ptr<backend::StubStage> refine;  // hybrid only
};

/// Store of (input latent, stylized output latent) pairs; inputs are seeded
/// random latents, outputs are the denoise stub applied to them.
inline KnnRunContext build_knn_context(const AppConfig& cfg,
                                       const backend::LatencyProfile& prof, int width,
                                       int height) {
  if (width % 8 != 0 || height % 8 != 0)
    throw std::invalid_argument("knn mode requires frame dimensions divisible by 8");
  KnnRunContext ctx;
  const int lw = width / 8, lh = height / 8;
  ctx.store.dim = static_cast<std::size_t>(4) * lw * lh;
  for (std::size_t i = 0; i < cfg.knn_cfg.store_size; ++i) {
    LatentTensor input = make_latent(4, lh, lw);
    Rng rng(cfg.pipeline.seed + 0x51ED1234abcdull * (i + 1));
    for (auto& v : input.data) v = 0.5f * rng.normal_float();
    LatentTensor output = backend::stub_denoise(input, Seed{cfg.pipeline.seed});
    ctx.store.add(std::span<const float>(input.data.data(), input.data.size()),
                  std::move(output));
  }
  using backend::StageKind;
  ctx.pre = std::make_unique<backend::StubStage>(StageKind::preprocess, prof.preprocess_ms);
  ctx.enc = std::make_unique<backend::StubStage>(StageKind::encode, prof.encode_ms);
  ctx.dec = std::make_unique<backend::StubStage>(StageKind::decode, prof.decode_ms);
  ctx.post = std::make_unique<backend::StubStage>(StageKind::postprocess, prof.postprocess_ms);
  if (cfg.pipeline.mode == "hybrid")
    ctx.refine = std::make_unique<backend::StubStage>(StageKind::denoise, prof.denoise_ms,
                                                      Seed{cfg.pipeline.seed});
  return ctx;
}

inline engine::PipelineReport run_knn_mode(const AppConfig& cfg,
                                           const backend::LatencyProfile& prof,
                                           engine::FrameSource& source,
                                           std::size_t n_frames,
                                           const engine::FrameSink& sink) {
  auto first = source.next();
  if (!first) throw std::runtime_error("source produced no frames");
  KnnRunContext ctx = build_knn_context(cfg, prof, first->width, first->height);
  knn::FlatIndex flat{&ctx.store};
  std::optional<knn::IvfPqIndex> ivf;
  if (cfg.knn_cfg.index == "ivfpq") {
    knn::IvfPqParams params;
    params.nlist = cfg.knn_cfg.nlist;
    params.nbits = cfg.knn_cfg.nbits;
    params.m = 4;  // latent dims are multiples of 4 channels
    while (ctx.store.dim % params.m != 0) --params.m;
    params.seed = Seed{cfg.pipeline.seed};
    ivf = knn::ivfpq_build(ctx.store, params);
  }

  const char* stage_names[] = {"preprocess", "encode", "search+blend",
                               "refine", "decode", "postprocess"};
  std::vector<std::vector<double>> stage_ms(6);
  std::vector<double> frame_ms;
  const std::size_t warmup = n_frames > engine::kWarmupFrames
                                 ? engine::kWarmupFrames
                                 : n_frames - 1;
  engine::Clock::time_point measured_start{};
  std::size_t i = 0;
  std::optional<FrameImage> frame = std::move(first);
  for (; i < n_frames && frame; ++i) {
    const bool measured = i >= warmup;
    auto t0 = engine::Clock::now();
    if (i == warmup) measured_start = t0;
    auto timed = [&](std::size_t s, auto&& fn) {
      auto ts = engine::Clock::now();
      fn();
      if (measured) stage_ms[s].push_back(engine::ms_between(ts, engine::Clock::now()));
    };
    backend::Payload payload = std::move(*frame);
    timed(0, [&] { payload = ctx.pre->process(std::move(payload)); });
    timed(1, [&] { payload = ctx.enc->process(std::move(payload)); });
    LatentTensor query = std::get<LatentTensor>(std::move(payload));
    LatentTensor blended;
    timed(2, [&] {
      knn::NeighborSet nb;
      if (ivf) {
        EmbeddingVector q;
        q.data = query.data;
        nb = knn::ivfpq_search(*ivf, q, cfg.knn_cfg.k, cfg.knn_cfg.nprobe);
      } else {
        nb = knn::latent_knn_search(ctx.store, query, cfg.knn_cfg.k);
      }
      const float t = cfg.knn_cfg.temperature > 0.0f ? cfg.knn_cfg.temperature
                                                     : knn::auto_temperature(nb);
      blended = knn::weighted_latent_average(nb, ctx.store, t);
      blended.source_frame_id = query.source_frame_id;
    });
    payload = std::move(blended);
    if (ctx.refine)
      timed(3, [&] { payload = ctx.refine->process(std::move(payload)); });
    timed(4, [&] { payload = ctx.dec->process(std::move(payload)); });
    timed(5, [&] { payload = ctx.post->process(std::move(payload)); });
    if (measured) frame_ms.push_back(engine::ms_between(t0, engine::Clock::now()));
    if (sink) sink(std::get<FrameImage>(payload));
    if (i + 1 < n_frames) frame = source.next();
  }

  engine::PipelineReport report;
  report.warmup_excluded = std::min(warmup, i);
  for (std::size_t s = 0; s < 6; ++s) {
    if (s == 3 && !ctx.refine) continue;
    report.stages.push_back(engine::detail::summarize(stage_names[s], stage_ms[s]));
  }
  report.end_to_end_mean_ms = engine::detail::mean_of(frame_ms);
  report.frames_measured = frame_ms.size();
  if (!frame_ms.empty()) {
    report.duration_s =
        engine::ms_between(measured_start, engine::Clock::now()) / 1000.0;
    if (report.duration_s > 0.0)
      report.achieved_fps = static_cast<double>(frame_ms.size()) / report.duration_s;
  }
  return report;
}

}  // namespace detail

/// Process a frame stream through the configured mode, writing numbered PPM
/// frames plus report.md / report.csv into the output directory.
inline int cmd_run(AppConfig cfg) {
  apply_env_seed(cfg);
  const fs::path out_dir = cfg.io.output_dir;
  fs::create_directories(out_dir);

  std::unique_ptr<engine::FrameSource> source;
  std::size_t n_frames = 0;
  if (cfg.io.input_dir) {
    auto dir = std::make_unique<DirectorySource>(*cfg.io.input_dir);
    n_frames = dir->count();
    if (n_frames == 0)
      throw std::invalid_argument("input directory has no .ppm frames: " +
                                  *cfg.io.input_dir);
    source = std::move(dir);
  } else {
    if (cfg.io.count == 0)
      throw std::invalid_argument("io.synthetic.count is 0: empty frame stream");
    n_frames = cfg.io.count;
    source = std::make_unique<synthetic::SyntheticSource>(cfg.io.synthetic, n_frames);
  }

  const backend::LatencyProfile prof =
      cfg.pipeline.stages ? *cfg.pipeline.stages
                          : backend::profile_preset(cfg.pipeline.profile);

  std::size_t written = 0;
  engine::FrameSink sink = [&](const FrameImage& f) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%06zu.ppm", written++);
    write_ppm(f, out_dir / name);
  };

  engine::PipelineReport report;
  if (cfg.pipeline.mode == "plain") {
    auto chain = detail::build_run_chain(cfg, prof);
    report = engine::run_sequential(chain, *source, n_frames, sink);
  } else if (cfg.pipeline.mode == "flowskip") {
    auto chain = detail::build_run_chain(cfg, prof);
    flow::FlowWarpSynthesizer warp(cfg.flow_cfg.params,
                                   cfg.flow_cfg.resolution == "half"
                                       ? flow::FlowResolution::half
                                       : flow::FlowResolution::full);
    flow::SkipSchedule schedule{cfg.flow_cfg.n, cfg.flow_cfg.resolution == "half"
                                                    ? flow::FlowResolution::half
                                                    : flow::FlowResolution::full};
    auto result = flow::skip_pipeline(schedule, chain, *source, n_frames, warp, sink);
    report = std::move(result.report);
  } else {
    report = detail::run_knn_mode(cfg, prof, *source, n_frames, sink);
  }

  {
    std::ofstream md(out_dir / "report.md");
    md << report.to_markdown();
    std::ofstream csv(out_dir / "report.csv");
    csv << report.to_csv();
  }
  std::printf("mode=%s frames=%zu mean=%.2fms fps=%.2f dropped=%llu out=%s\n",
              cfg.pipeline.mode.c_str(), written, report.end_to_end_mean_ms,
              report.achieved_fps,
              static_cast<unsigned long long>(report.dropped_frames),
              out_dir.string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// bench command

inline std::vector<bench::BenchScenario> parse_scenarios(const json& doc) {
  detail::require_keys(doc, "", {"scenarios"});
  if (!doc.contains("scenarios") || !doc.at("scenarios").is_array())
    throw std::invalid_argument("scenario file must contain a 'scenarios' array");
  const json& arr = doc.at("scenarios");
  if (arr.empty()) throw std::invalid_argument("scenario list is empty");

  std::vector<bench::BenchScenario> out;
  for (const json& e : arr) {
    detail::require_keys(
        e, "scenario",
        {"name", "mode", "profile", "stages", "parameters", "frames", "duration_s", "seed"});
    bench::BenchScenario s;
    if (!e.contains("name")) throw std::invalid_argument("scenario missing 'name'");
    s.name = e.at("name").get<std::string>();
    if (!e.contains("mode")) throw std::invalid_argument("scenario missing 'mode'");
    s.mode = e.at("mode").get<std::string>();
    if (e.contains("profile") && e.contains("stages"))
      throw std::invalid_argument("scenario '" + s.name +
                                  "': give either 'profile' or 'stages', not both");
    if (e.contains("profile"))
      s.profile = backend::profile_preset(e.at("profile").get<std::string>());
    if (e.contains("stages"))
      s.profile = detail::parse_stage_latencies(e.at("stages"), "scenario.stages");
    detail::read_to(e, "frames", s.n_frames);
    detail::read_to(e, "duration_s", s.duration_s);
    if (e.contains("seed")) s.seed.value = e.at("seed").get<std::uint64_t>();
    if (e.contains("parameters")) {
      const json& p = e.at("parameters");
      detail::require_keys(p, "parameters",
                           {"width", "height", "capture_fps", "n", "unet_ms", "warp_ms",
                            "store", "dim", "k", "index", "nlist", "nprobe", "encode_ms",
                            "decode_ms"});
      detail::read_to(p, "width", s.frame_width);
      detail::read_to(p, "height", s.frame_height);
      detail::read_to(p, "capture_fps", s.capture_fps);
      detail::read_to(p, "n", s.skip_n);
      detail::read_to(p, "unet_ms", s.unet_ms);
      detail::read_to(p, "warp_ms", s.warp_ms);
      detail::read_to(p, "store", s.knn_store);
      detail::read_to(p, "dim", s.knn_dim);
      detail::read_to(p, "k", s.knn_k);
      detail::read_to(p, "index", s.knn_index);
      detail::read_to(p, "nlist", s.knn_nlist);
      detail::read_to(p, "nprobe", s.knn_nprobe);
      detail::read_to(p, "encode_ms", s.encode_ms);
      detail::read_to(p, "decode_ms", s.decode_ms);
    }
    if (auto es = env_seed()) s.seed.value = *es;
    out.push_back(std::move(s));
  }
  return out;
}

/// Run every scenario in the file; markdown to stdout, CSV to csv_path if set.
inline int cmd_bench(const fs::path& scenario_file,
                     const std::optional<fs::path>& csv_path = std::nullopt) {
  std::ifstream is(scenario_file);
  if (!is)
    throw std::invalid_argument("cannot open scenario file: " + scenario_file.string());
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::exception& e) {
    throw std::invalid_argument("scenario parse error in " + scenario_file.string() +
                                ": " + e.what());
  }
  auto scenarios = parse_scenarios(doc);
  std::vector<bench::ScenarioResult> results;
  results.reserve(scenarios.size());
  for (const auto& s : scenarios) {
    std::fprintf(stderr, "running scenario '%s' (%s)...\n", s.name.c_str(), s.mode.c_str());
    results.push_back(bench::run_scenario(s));
  }
  std::cout << bench::emit_table_markdown(results);
  if (csv_path) {
    std::ofstream os(*csv_path);
    if (!os) throw std::runtime_error("cannot write CSV to " + csv_path->string());
    os << bench::emit_table_csv(results);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// index command

struct IndexBuildOptions {
  std::optional<fs::path> vectors_file;
  std::size_t synthetic_n = 0;
  std::size_t dim = 768;
  std::size_t clusters = 1024;
  float cluster_std = 0.05f;
  std::size_t nlist = 256;
  std::size_t m = 48;
  std::size_t nbits = 8;
  std::uint64_t seed = 7;
  fs::path out = "index.ivpq";
};

namespace detail {

inline knn::VectorStore load_or_generate(const std::optional<fs::path>& file,
                                         std::size_t synthetic_n, std::size_t dim,
                                         std::size_t clusters, float cluster_std,
                                         std::uint64_t seed) {
  knn::VectorStore store;
  if (file) {
    knn::VectorFile vf = knn::read_vectors(*file);
    store.dim = vf.dim;
    store.vectors = std::move(vf.values);
  } else {
    if (synthetic_n == 0)
      throw std::invalid_argument("give a vectors file or a synthetic vector count");
    store.dim = dim;
    store.vectors =
        synthetic::clustered_vectors(synthetic_n, dim, clusters, cluster_std, Seed{seed});
  }
  return store;
}

}  // namespace detail

inline int cmd_index_build(IndexBuildOptions opts) {
  if (auto es = env_seed()) opts.seed = *es;
  knn::VectorStore store =
      detail::load_or_generate(opts.vectors_file, opts.synthetic_n, opts.dim,
                               opts.clusters, opts.cluster_std, opts.seed);
  knn::IvfPqParams params;
  params.nlist = opts.nlist;
  params.m = opts.m;
  params.nbits = opts.nbits;
  params.seed = Seed{opts.seed};
  knn::IvfPqIndex index = knn::ivfpq_build(store, params);
  knn::save_index(index, opts.out);
  std::printf("built index: n=%zu dim=%zu nlist=%zu m=%zu nbits=%zu -> %s\n",
              store.size(), store.dim, index.nlist, index.m, index.nbits,
              opts.out.string().c_str());
  return 0;
}

struct IndexSearchOptions {
  std::optional<fs::path> index_file;    // IVF-PQ route
  std::optional<fs::path> vectors_file;  // flat route
  fs::path queries_file;
  std::size_t k = 10;
  std::size_t nprobe = 8;
};

inline int cmd_index_search(const IndexSearchOptions& opts) {
  knn::VectorFile queries = knn::read_vectors(opts.queries_file);
  std::optional<knn::IvfPqIndex> ivf;
  knn::VectorStore store;
  if (opts.index_file) {
    ivf = knn::load_index(*opts.index_file);
  } else if (opts.vectors_file) {
    knn::VectorFile vf = knn::read_vectors(*opts.vectors_file);
    store.dim = vf.dim;
    store.vectors = std::move(vf.values);
  } else {
    throw std::invalid_argument("index search needs --index or --vectors");
  }
  knn::FlatIndex flat{&store};
  for (std::size_t qi = 0; qi < queries.count(); ++qi) {
    EmbeddingVector q;
    q.data.assign(queries.values.begin() + static_cast<long>(qi * queries.dim),
                  queries.values.begin() + static_cast<long>((qi + 1) * queries.dim));
    knn::NeighborSet nb = ivf ? knn::ivfpq_search(*ivf, q, opts.k, opts.nprobe)
                              : knn::flat_search(flat, q, opts.k);
    std::printf("query %zu:", qi);
    for (std::size_t i = 0; i < nb.k(); ++i)
      std::printf(" id=%u dist=%.6f", nb.ids[i], nb.distances[i]);
    std::printf("\n");
  }
  return 0;
}

struct IndexEvalOptions {
  std::optional<fs::path> vectors_file;
  std::size_t synthetic_n = 100000;
  std::size_t dim = 768;
  std::size_t clusters = 1024;
  float cluster_std = 0.05f;
  std::size_t n_queries = 100;
  std::size_t k = 10;
  std::size_t nlist = 256;
  std::size_t m = 48;
  std::size_t nbits = 8;
  std::size_t nprobe = 8;
  std::uint64_t seed = 7;
};

/// recall@k of IVF-PQ against the exact oracle, plus a latency-vs-n table
/// for both search routes over nested subsets of the data.
inline int cmd_index_eval(IndexEvalOptions opts) {
  if (auto es = env_seed()) opts.seed = *es;
  knn::VectorStore store =
      detail::load_or_generate(opts.vectors_file, opts.synthetic_n, opts.dim,
                               opts.clusters, opts.cluster_std, opts.seed);
  const std::size_t n = store.size();
  if (n < std::max(opts.nlist, static_cast<std::size_t>(1) << opts.nbits))
    throw std::invalid_argument("eval: too few vectors for the index parameters");

  knn::IvfPqParams params;
  params.nlist = opts.nlist;
  params.m = opts.m;
  params.nbits = opts.nbits;
  params.seed = Seed{opts.seed};
  knn::IvfPqIndex index = knn::ivfpq_build(store, params);

  Rng qrng(opts.seed ^ 0x0ddba11ull);
  std::vector<EmbeddingVector> queries(opts.n_queries);
  for (auto& q : queries) {
    const float* base = store.row(static_cast<std::size_t>(qrng.uniform_index(n)));
    q.data.assign(base, base + store.dim);
    for (auto& v : q.data) v += 0.01f * qrng.normal_float();
  }

  knn::FlatIndex flat{&store};
  double hit = 0.0;
  for (const auto& q : queries) {
    knn::NeighborSet truth = knn::flat_search(flat, q, opts.k);
    knn::NeighborSet approx = knn::ivfpq_search(index, q, opts.k, opts.nprobe);
    for (auto id : approx.ids)
      if (std::find(truth.ids.begin(), truth.ids.end(), id) != truth.ids.end())
        hit += 1.0;
  }
  const double recall =
      hit / (static_cast<double>(opts.n_queries) * static_cast<double>(opts.k));
  std::printf("recall@%zu at nprobe=%zu: %.4f (n=%zu, nlist=%zu, m=%zu)\n", opts.k,
              opts.nprobe, recall, n, opts.nlist, opts.m);

  std::printf("\n| n | flat ms/query | ivfpq ms/query (nlist) |\n|---|---|---|\n");
  for (std::size_t sub : {static_cast<std::size_t>(1000), static_cast<std::size_t>(10000),
                          static_cast<std::size_t>(100000), n}) {
    if (sub > n) break;
    knn::VectorStore substore;
    substore.dim = store.dim;
    substore.vectors.assign(store.vectors.begin(),
                            store.vectors.begin() + static_cast<long>(sub * store.dim));
    knn::FlatIndex subflat{&substore};
    auto flat_stats = bench::measure(
        [&] { (void)knn::flat_search(subflat, queries[0], opts.k); }, 2, 7);
    const std::size_t sub_nlist =
        std::max<std::size_t>(16, std::min(opts.nlist, sub / 64));
    knn::IvfPqParams sp = params;
    sp.nlist = sub_nlist;
    knn::IvfPqIndex subindex = knn::ivfpq_build(substore, sp);
    const std::size_t sub_nprobe = std::min(opts.nprobe, sub_nlist);
    auto ivf_stats = bench::measure(
        [&] { (void)knn::ivfpq_search(subindex, queries[0], opts.k, sub_nprobe); }, 2, 7);
    std::printf("| %zu | %.3f | %.3f (%zu) |\n", sub, flat_stats.mean_ms,
                ivf_stats.mean_ms, sub_nlist);
    if (sub == n) break;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// flow command

struct FlowDemoOptions {
  std::optional<fs::path> frame_a;
  std::optional<fs::path> frame_b;
  int width = 256;
  int height = 256;
  double shift_dx = 4.0;
  double shift_dy = 2.0;
  std::string resolution = "full";
  flow::FlowParams params;
  fs::path out_dir = "flow_out";
  std::uint64_t seed = 1;
  bool table = false;
  double unet_ms = 51.7;
  double warp_ms = 6.6;
  int max_n = 5;
};

inline int cmd_flow(FlowDemoOptions opts) {
  if (auto es = env_seed()) opts.seed = *es;
  if (opts.table) {
    std::printf("| n | ms/frame | FPS |\n|---|---|---|\n");
    for (int n = 1; n <= opts.max_n; ++n) {
      const double ms = flow::theoretical_ms_per_frame(opts.unet_ms, opts.warp_ms, n);
      std::printf("| %d | %.2f | %.1f |\n", n, ms, 1000.0 / ms);
    }
    return 0;
  }

  FrameImage a, b;
  if (opts.frame_a && opts.frame_b) {
    a = read_ppm(*opts.frame_a);
    b = read_ppm(*opts.frame_b);
  } else if (opts.frame_a || opts.frame_b) {
    throw std::invalid_argument("flow demo needs two frames or none (synthetic)");
  } else {
    synthetic::FrameSpec spec;
    spec.width = opts.width;
    spec.height = opts.height;
    spec.pattern = synthetic::Pattern::bandlimited_noise;
    spec.seed = Seed{opts.seed};
    a = synthetic::detail::base_frame(spec);
    b = synthetic::translate(a, opts.shift_dx, opts.shift_dy);
  }

  FlowField field;
  if (opts.resolution == "half") {
    field = flow::half_res_flow(a, b, opts.params);
  } else if (opts.resolution == "full") {
    const FrameImage ga = a.channels == 3 ? to_grayscale(a) : a;
    const FrameImage gb = b.channels == 3 ? to_grayscale(b) : b;
    field = flow::farneback_flow(ga, gb, opts.params);
  } else {
    throw std::invalid_argument("flow resolution must be 'full' or 'half'");
  }

  const int border = opts.params.window_size;
  double mx = 0.0, my = 0.0, mag = 0.0;
  std::size_t count = 0;
  for (int y = border; y < field.height - border; ++y)
    for (int x = border; x < field.width - border; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * field.width + x;
      mx += field.dx[i];
      my += field.dy[i];
      mag += std::sqrt(static_cast<double>(field.dx[i]) * field.dx[i] +
                       static_cast<double>(field.dy[i]) * field.dy[i]);
      ++count;
    }
  if (count == 0) throw std::runtime_error("flow demo: interior region is empty");
  mx /= static_cast<double>(count);
  my /= static_cast<double>(count);
  mag /= static_cast<double>(count);
  std::printf("mean flow (interior): dx=%.3f dy=%.3f |flow|=%.3f\n", mx, my, mag);

  fs::create_directories(opts.out_dir);
  FrameImage warped = flow::warp_bilinear(a, field);
  write_ppm(warped, opts.out_dir / "warped.ppm");
  FrameImage vis = make_frame(field.width, field.height, 1);
  float peak = 1e-6f;
  for (std::size_t i = 0; i < field.pixel_count(); ++i)
    peak = std::max(peak, std::abs(field.dx[i]) + std::abs(field.dy[i]));
  for (std::size_t i = 0; i < field.pixel_count(); ++i)
    vis.data[i] = streamskip::detail::clampf(
        (std::abs(field.dx[i]) + std::abs(field.dy[i])) / peak, 0.0f, 1.0f);
  write_ppm(vis, opts.out_dir / "flow_mag.ppm");
  std::printf("wrote %s and %s\n", (opts.out_dir / "warped.ppm").string().c_str(),
              (opts.out_dir / "flow_mag.ppm").string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// Exit-code policy: 0 ok, 1 usage/config, 2 runtime.

template <typename F>
inline int guarded(F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace streamskip::cli
