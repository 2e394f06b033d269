#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "streamskip/backend.hpp"
#include "streamskip/engine.hpp"
#include "streamskip/flow.hpp"
#include "streamskip/knn.hpp"
#include "streamskip/synthetic.hpp"

namespace streamskip::bench {

struct TimingStats {
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
  std::size_t samples = 0;
  std::size_t warmup_excluded = 0;
};

/// Smallest observable steady-clock increment, measured once per process.
inline double clock_granularity_ms() {
  static const double granularity = [] {
    double best = 1e9;
    for (int i = 0; i < 256; ++i) {
      auto a = engine::Clock::now();
      auto b = engine::Clock::now();
      while (b == a) b = engine::Clock::now();
      best = std::min(best, engine::ms_between(a, b));
    }
    return best;
  }();
  return granularity;
}

/// Time a callable with a monotonic clock around each call. The first
/// `warmup` of `iters` calls are discarded. When the warmup probe shows the
/// per-call time is under 50x the clock granularity, calls are batched and
/// each retained sample is a batch average (the guard needs warmup >= 1;
/// with warmup 0 every call is timed individually).
inline TimingStats measure(const std::function<void()>& fn, int warmup, int iters) {
  if (iters < 1) throw std::invalid_argument("measure: iters must be >= 1");
  if (warmup < 0) throw std::invalid_argument("measure: warmup must be >= 0");
  if (warmup >= iters)
    throw std::invalid_argument("measure: warmup leaves no retained samples");

  double probe_ms = -1.0;
  for (int i = 0; i < warmup; ++i) {
    auto t0 = engine::Clock::now();
    fn();
    probe_ms = engine::ms_between(t0, engine::Clock::now());
  }

  std::size_t batch = 1;
  const double floor_ms = 50.0 * clock_granularity_ms();
  if (warmup > 0 && probe_ms < floor_ms) {
    const double per_call = std::max(probe_ms, clock_granularity_ms() * 0.01);
    batch = static_cast<std::size_t>(std::ceil(floor_ms / per_call));
    batch = std::min<std::size_t>(batch, 1u << 20);
  }

  const int retained = iters - warmup;
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(retained));
  for (int i = 0; i < retained; ++i) {
    auto t0 = engine::Clock::now();
    for (std::size_t b = 0; b < batch; ++b) fn();
    samples.push_back(engine::ms_between(t0, engine::Clock::now()) /
                      static_cast<double>(batch));
  }

  TimingStats stats;
  stats.samples = samples.size();
  stats.warmup_excluded = static_cast<std::size_t>(warmup);
  stats.mean_ms = engine::detail::mean_of(samples);
  stats.p50_ms = engine::detail::percentile(samples, 0.50);
  stats.p95_ms = engine::detail::percentile(samples, 0.95);
  stats.min_ms = *std::min_element(samples.begin(), samples.end());
  stats.max_ms = *std::max_element(samples.begin(), samples.end());
  return stats;
}

// ---------------------------------------------------------------------------
// Scenarios

struct BenchScenario {
  std::string name;
  std::string mode = "sequential";  // sequential | threaded | flowskip | knn
  backend::LatencyProfile profile;
  std::size_t n_frames = 100;
  double duration_s = 5.0;
  double capture_fps = 60.0;
  int frame_width = 256;
  int frame_height = 256;
  // flowskip
  int skip_n = 3;
  double unet_ms = 51.7;
  double warp_ms = 6.6;
  // knn
  std::size_t knn_store = 4096;
  std::size_t knn_dim = 768;
  std::size_t knn_k = 8;
  std::size_t knn_nlist = 64;
  std::size_t knn_nprobe = 8;
  std::string knn_index = "flat";
  double encode_ms = 0.0;
  double decode_ms = 0.0;
  Seed seed{7};
};

struct ScenarioResult {
  std::string name;
  std::string mode;
  double predicted_fps = std::numeric_limits<double>::quiet_NaN();
  double measured_fps = 0.0;
  double ratio = std::numeric_limits<double>::quiet_NaN();
  double mean_ms_per_frame = 0.0;
  engine::PipelineReport report;
  std::string note;
};

namespace detail {

inline std::vector<double> profile_latencies(const backend::LatencyProfile& p) {
  auto a = p.stage_latencies();
  return {a.begin(), a.end()};
}

inline synthetic::FrameSpec scenario_frames(const BenchScenario& s) {
  synthetic::FrameSpec spec;
  spec.width = s.frame_width;
  spec.height = s.frame_height;
  spec.pattern = synthetic::Pattern::bandlimited_noise;
  spec.seed = s.seed;
  return spec;
}

inline ScenarioResult run_sequential_scenario(const BenchScenario& s) {
  ScenarioResult r;
  auto chain = engine::make_stub_chain(s.profile, s.seed);
  synthetic::SyntheticSource source(scenario_frames(s), s.n_frames);
  r.report = engine::run_sequential(chain, source, s.n_frames);
  r.predicted_fps = engine::predict_fps(detail::profile_latencies(s.profile),
                                        engine::ExecMode::sequential);
  r.measured_fps = r.report.achieved_fps;
  r.mean_ms_per_frame = r.report.end_to_end_mean_ms;
  r.ratio = r.measured_fps / r.predicted_fps;
  if (r.ratio < 0.85 || r.ratio > 1.05)
    r.note = "measured/predicted ratio outside [0.85, 1.05]";
  return r;
}

inline ScenarioResult run_threaded_scenario(const BenchScenario& s) {
  ScenarioResult r;
  using backend::StageKind;
  using backend::StubStage;
  std::vector<engine::StageSpec> chain{
      {"preprocess", std::make_shared<StubStage>(StageKind::preprocess, s.profile.preprocess_ms), s.profile.preprocess_ms},
      {"encode", std::make_shared<StubStage>(StageKind::encode, s.profile.encode_ms), s.profile.encode_ms},
      {"denoise", std::make_shared<StubStage>(StageKind::denoise, s.profile.denoise_ms, s.seed), s.profile.denoise_ms},
      {"decode", std::make_shared<StubStage>(StageKind::decode, s.profile.decode_ms), s.profile.decode_ms},
  };
  synthetic::SyntheticSource source(scenario_frames(s));
  engine::NullSink sink(s.profile.postprocess_ms);
  auto run = engine::run_threaded(source, s.capture_fps, chain, sink, s.duration_s);
  r.report = std::move(run.report);
  r.predicted_fps = engine::predict_fps(detail::profile_latencies(s.profile),
                                        engine::ExecMode::threaded);
  r.measured_fps = r.report.achieved_fps;
  r.mean_ms_per_frame = r.report.end_to_end_mean_ms;
  r.ratio = r.measured_fps / r.predicted_fps;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "dropped=%llu",
                static_cast<unsigned long long>(r.report.dropped_frames));
  r.note = buf;
  return r;
}

inline ScenarioResult run_flowskip_scenario(const BenchScenario& s) {
  ScenarioResult r;
  std::vector<engine::StageSpec> chain{
      {"unet", std::make_shared<backend::StubStage>(backend::StageKind::custom, s.unet_ms),
       s.unet_ms}};
  flow::StubWarpSynthesizer warp(s.warp_ms);
  flow::SkipSchedule schedule{s.skip_n, flow::FlowResolution::half};
  synthetic::FrameSpec spec = scenario_frames(s);
  synthetic::SyntheticSource source(spec, s.n_frames);
  auto run = flow::skip_pipeline(schedule, chain, source, s.n_frames, warp);
  r.report = std::move(run.report);
  r.mean_ms_per_frame = run.ms_per_frame;
  r.measured_fps = run.ms_per_frame > 0.0 ? 1000.0 / run.ms_per_frame : 0.0;
  if (run.theoretical_ms) {
    r.predicted_fps = 1000.0 / *run.theoretical_ms;
    r.ratio = r.measured_fps / r.predicted_fps;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "theoretical=%.2fms/frame overhead=%+.3fms",
                  *run.theoretical_ms, *run.overhead_ms);
    r.note = buf;
  }
  return r;
}

inline ScenarioResult run_knn_scenario(const BenchScenario& s) {
  ScenarioResult r;
  knn::VectorStore store;
  store.dim = s.knn_dim;
  store.vectors = synthetic::clustered_vectors(s.knn_store, s.knn_dim,
                                               std::max<std::size_t>(s.knn_store / 64, 1),
                                               0.05f, s.seed);
  for (std::size_t i = 0; i < s.knn_store; ++i) {
    LatentTensor lat = make_latent(4, 8, 8);
    Rng rng(s.seed.value + i);
    for (auto& v : lat.data) v = rng.normal_float();
    store.payloads.push_back(std::move(lat));
  }
  std::optional<knn::IvfPqIndex> ivf;
  if (s.knn_index == "ivfpq") {
    knn::IvfPqParams params;
    params.nlist = s.knn_nlist;
    params.m = std::min<std::size_t>(s.knn_dim, 8);
    while (s.knn_dim % params.m != 0) --params.m;
    params.seed = s.seed;
    ivf = knn::ivfpq_build(store, params);
  }
  knn::FlatIndex flat{&store};

  Rng qrng(s.seed.value ^ 0xFEEDFACEull);
  std::vector<double> frame_times;
  const std::size_t warmup = s.n_frames > engine::kWarmupFrames
                                 ? engine::kWarmupFrames
                                 : s.n_frames - 1;
  EmbeddingVector q;
  q.data.resize(s.knn_dim);
  std::vector<double> search_times;
  for (std::size_t i = 0; i < s.n_frames; ++i) {
    auto t0 = engine::Clock::now();
    auto enc_deadline = t0 + std::chrono::duration_cast<engine::Clock::duration>(
                                 std::chrono::duration<double, std::milli>(s.encode_ms));
    for (auto& v : q.data) v = qrng.normal_float();
    backend::detail2::sleep_until_deadline(enc_deadline);
    auto ts = engine::Clock::now();
    knn::NeighborSet nb = ivf ? knn::ivfpq_search(*ivf, q, s.knn_k, s.knn_nprobe)
                              : knn::flat_search(flat, q, s.knn_k);
    LatentTensor avg =
        knn::weighted_latent_average(nb, store, knn::auto_temperature(nb));
    (void)avg;
    if (i >= warmup) search_times.push_back(engine::ms_between(ts, engine::Clock::now()));
    auto dec_deadline =
        engine::Clock::now() + std::chrono::duration_cast<engine::Clock::duration>(
                                   std::chrono::duration<double, std::milli>(s.decode_ms));
    backend::detail2::sleep_until_deadline(dec_deadline);
    if (i >= warmup) frame_times.push_back(engine::ms_between(t0, engine::Clock::now()));
  }
  r.report.stages.push_back(engine::detail::summarize("search+blend", search_times));
  r.report.end_to_end_mean_ms = engine::detail::mean_of(frame_times);
  r.report.frames_measured = frame_times.size();
  r.report.warmup_excluded = warmup;
  r.mean_ms_per_frame = r.report.end_to_end_mean_ms;
  r.measured_fps = r.mean_ms_per_frame > 0.0 ? 1000.0 / r.mean_ms_per_frame : 0.0;
  r.report.achieved_fps = r.measured_fps;
  r.note = "index=" + s.knn_index;
  return r;
}

}  // namespace detail

/// Execute one scenario and attach the analytic prediction where the mode
/// defines one.
inline ScenarioResult run_scenario(const BenchScenario& s) {
  ScenarioResult r;
  if (s.mode == "sequential") r = detail::run_sequential_scenario(s);
  else if (s.mode == "threaded") r = detail::run_threaded_scenario(s);
  else if (s.mode == "flowskip") r = detail::run_flowskip_scenario(s);
  else if (s.mode == "knn") r = detail::run_knn_scenario(s);
  else throw std::invalid_argument("unknown scenario mode '" + s.mode +
                                   "'; valid: sequential, threaded, flowskip, knn");
  r.name = s.name;
  r.mode = s.mode;
  return r;
}

namespace detail {

inline std::string fps_cell(double v) {
  if (std::isnan(v)) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline std::string breakdown_cell(const engine::PipelineReport& report) {
  std::ostringstream os;
  for (std::size_t i = 0; i < report.stages.size(); ++i) {
    if (i) os << " ";
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%s=%.2fms", report.stages[i].name.c_str(),
                  report.stages[i].mean_ms);
    os << buf;
  }
  return os.str();
}

}  // namespace detail

/// Summary table plus one per-stage breakdown table per scenario. Measured
/// figures validate scheduling arithmetic on this host against configured
/// stage latencies; they do not measure any model backend.
inline std::string emit_table_markdown(const std::vector<ScenarioResult>& results) {
  if (results.empty()) throw std::invalid_argument("emit_table: no results");
  std::ostringstream os;
  os << "| Scenario | Predicted FPS | Measured FPS | Ratio | Mean ms/frame | Stages |\n";
  os << "|---|---|---|---|---|---|\n";
  for (const auto& r : results) {
    char mean_buf[32];
    std::snprintf(mean_buf, sizeof(mean_buf), "%.2f", r.mean_ms_per_frame);
    os << "| " << r.name << " | " << detail::fps_cell(r.predicted_fps) << " | "
       << detail::fps_cell(r.measured_fps) << " | " << detail::fps_cell(r.ratio)
       << " | " << mean_buf << " | " << detail::breakdown_cell(r.report) << " |\n";
  }
  for (const auto& r : results) {
    os << "\n### " << r.name << " (" << r.mode << ")\n\n" << r.report.to_markdown();
    if (!r.note.empty()) os << "\nnote: " << r.note << "\n";
  }
  os << "\nStage times are configured stub latencies replayed on this host; "
        "throughput figures validate pipeline arithmetic, not backend speed.\n";
  return os.str();
}

inline std::string emit_table_csv(const std::vector<ScenarioResult>& results) {
  if (results.empty()) throw std::invalid_argument("emit_table: no results");
  std::ostringstream os;
  os << "scenario,mode,predicted_fps,measured_fps,ratio,mean_ms_per_frame\n";
  for (const auto& r : results) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%s,%.17g,%.17g,%.17g,%.17g\n", r.name.c_str(),
                  r.mode.c_str(), r.predicted_fps, r.measured_fps, r.ratio,
                  r.mean_ms_per_frame);
    os << buf;
  }
  return os.str();
}

}  // namespace streamskip::bench
