#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "streamskip/backend.hpp"
#include "streamskip/core.hpp"

namespace streamskip::engine {

using Clock = std::chrono::steady_clock;

inline double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

inline std::uint64_t now_ns() {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(
          Clock::now().time_since_epoch())
          .count());
}

// ---------------------------------------------------------------------------
// Sources and sinks

class FrameSource {
 public:
  virtual ~FrameSource() = default;
  /// Next frame, or nullopt when the stream is exhausted.
  virtual std::optional<FrameImage> next() = 0;
};

class DisplaySink {
 public:
  virtual ~DisplaySink() = default;
  virtual void show(const FrameImage& frame) = 0;
};

/// Discards frames, optionally spending a configured latency per frame.
class NullSink : public DisplaySink {
 public:
  explicit NullSink(double latency_ms = 0.0) : latency_ms_(latency_ms) {}
  void show(const FrameImage&) override {
    if (latency_ms_ > 0.0) {
      auto deadline = Clock::now() +
                      std::chrono::duration_cast<Clock::duration>(
                          std::chrono::duration<double, std::milli>(latency_ms_));
      std::this_thread::sleep_until(deadline);
    }
  }

 private:
  double latency_ms_;
};

// ---------------------------------------------------------------------------
// Latest-wins mailbox

/// Capacity-1 channel for one producer and one consumer on different threads.
/// put never blocks: an unconsumed item is overwritten and counted as a drop.
/// take consumes the freshest item; sequence numbers seen by the consumer are
/// non-decreasing.
template <typename T>
class MailboxSlot {
 public:
  struct Entry {
    T item;
    std::uint64_t seq = 0;
  };

  void put(T item, std::uint64_t seq) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (slot_.has_value()) ++dropped_;
      slot_ = Entry{std::move(item), seq};
    }
    cv_.notify_one();
  }

  std::optional<Entry> take() {
    std::lock_guard<std::mutex> lock(mu_);
    if (!slot_.has_value()) return std::nullopt;
    std::optional<Entry> out = std::move(slot_);
    slot_.reset();
    return out;
  }

  /// Blocking take with timeout; wakes early on put or close.
  std::optional<Entry> await(std::chrono::milliseconds timeout) {
    std::unique_lock<std::mutex> lock(mu_);
    cv_.wait_for(lock, timeout, [this] { return slot_.has_value() || closed_; });
    if (!slot_.has_value()) return std::nullopt;
    std::optional<Entry> out = std::move(slot_);
    slot_.reset();
    return out;
  }

  void close() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  bool closed() const {
    std::lock_guard<std::mutex> lock(mu_);
    return closed_;
  }

  std::uint64_t dropped() const { return dropped_.load(); }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::optional<Entry> slot_;
  std::atomic<std::uint64_t> dropped_{0};
  bool closed_ = false;
};

// ---------------------------------------------------------------------------
// Reports

struct StageStats {
  std::string name;
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  std::size_t count = 0;
};

namespace detail {

/// Nearest-rank percentile over a sorted copy of the samples.
inline double percentile(std::vector<double> sorted, double q) {
  std::sort(sorted.begin(), sorted.end());
  if (sorted.empty()) return 0.0;
  std::size_t rank = static_cast<std::size_t>(
      std::ceil(q * static_cast<double>(sorted.size())));
  if (rank == 0) rank = 1;
  if (rank > sorted.size()) rank = sorted.size();
  return sorted[rank - 1];
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline StageStats summarize(const std::string& name, const std::vector<double>& samples) {
  StageStats s;
  s.name = name;
  s.count = samples.size();
  s.mean_ms = mean_of(samples);
  s.p50_ms = percentile(samples, 0.50);
  s.p95_ms = percentile(samples, 0.95);
  return s;
}

inline std::string format_ms(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace detail

struct PipelineReport {
  std::vector<StageStats> stages;
  double end_to_end_mean_ms = 0.0;
  double achieved_fps = 0.0;
  double duration_s = 0.0;
  std::uint64_t dropped_frames = 0;
  std::size_t frames_measured = 0;
  std::size_t warmup_excluded = 0;

  double stage_total_ms() const {
    double t = 0.0;
    for (const auto& s : stages) t += s.mean_ms;
    return t;
  }

  /// Stage | Time | Proportion table plus a total row.
  std::string to_markdown() const {
    std::ostringstream os;
    os << "| Stage | Time | Proportion |\n|---|---|---|\n";
    const double total = stage_total_ms();
    for (const auto& s : stages) {
      double prop = total > 0.0 ? 100.0 * s.mean_ms / total : 0.0;
      char pbuf[32];
      std::snprintf(pbuf, sizeof(pbuf), "%.1f%%", prop);
      os << "| " << s.name << " | " << detail::format_ms(s.mean_ms) << "ms | "
         << pbuf << " |\n";
    }
    char fps[32];
    std::snprintf(fps, sizeof(fps), "%.1f", achieved_fps);
    os << "| Total | " << detail::format_ms(total) << "ms | " << fps << " FPS |\n";
    return os.str();
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << "stage,mean_ms,p50_ms,p95_ms\n";
    for (const auto& s : stages) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g\n", s.name.c_str(),
                    s.mean_ms, s.p50_ms, s.p95_ms);
      os << buf;
    }
    return os.str();
  }
};

// ---------------------------------------------------------------------------
// Stage chains

struct StageSpec {
  std::string name;
  std::shared_ptr<backend::Stage> executor;
  std::optional<double> declared_latency_ms;
};

inline void validate_chain(const std::vector<StageSpec>& stages) {
  std::unordered_set<std::string> names;
  for (const auto& s : stages) {
    if (!s.executor) throw std::invalid_argument("stage '" + s.name + "' has no executor");
    if (!names.insert(s.name).second)
      throw std::invalid_argument("duplicate stage name '" + s.name + "'");
  }
}

/// Build the five-stage stub chain for a latency profile.
inline std::vector<StageSpec> make_stub_chain(const backend::LatencyProfile& p, Seed seed) {
  using backend::StageKind;
  using backend::StubStage;
  return {
      {"preprocess", std::make_shared<StubStage>(StageKind::preprocess, p.preprocess_ms), p.preprocess_ms},
      {"encode", std::make_shared<StubStage>(StageKind::encode, p.encode_ms), p.encode_ms},
      {"denoise", std::make_shared<StubStage>(StageKind::denoise, p.denoise_ms, seed), p.denoise_ms},
      {"decode", std::make_shared<StubStage>(StageKind::decode, p.decode_ms), p.decode_ms},
      {"postprocess", std::make_shared<StubStage>(StageKind::postprocess, p.postprocess_ms), p.postprocess_ms},
  };
}

enum class ExecMode { sequential, threaded };

/// Analytic throughput: reciprocal of the latency sum (sequential) or of the
/// largest stage latency (fully overlapped threads).
inline double predict_fps(const std::vector<double>& stage_latencies_ms, ExecMode mode) {
  if (stage_latencies_ms.empty())
    throw std::invalid_argument("predict_fps: no stage latencies given");
  double sum = 0.0, mx = 0.0;
  for (double v : stage_latencies_ms) {
    if (!(v > 0.0)) throw std::invalid_argument("predict_fps: latencies must be > 0");
    sum += v;
    mx = std::max(mx, v);
  }
  return mode == ExecMode::sequential ? 1000.0 / sum : 1000.0 / mx;
}

inline double predict_fps(const std::vector<StageSpec>& stages, ExecMode mode) {
  std::vector<double> lat;
  lat.reserve(stages.size());
  for (const auto& s : stages) {
    if (!s.declared_latency_ms)
      throw std::invalid_argument("predict_fps: stage '" + s.name +
                                  "' has no declared latency");
    lat.push_back(*s.declared_latency_ms);
  }
  return predict_fps(lat, mode);
}

// ---------------------------------------------------------------------------
// Sequential runner

constexpr std::size_t kWarmupFrames = 3;

using FrameSink = std::function<void(const FrameImage&)>;

namespace detail {

inline backend::Payload run_chain(const std::vector<StageSpec>& stages,
                                  backend::Payload payload, std::uint64_t frame_id,
                                  std::vector<std::vector<double>>* stage_ms) {
  for (std::size_t i = 0; i < stages.size(); ++i) {
    auto t0 = Clock::now();
    try {
      payload = stages[i].executor->process(std::move(payload));
    } catch (const std::exception& e) {
      throw std::runtime_error("stage '" + stages[i].name + "' failed at frame " +
                               std::to_string(frame_id) + ": " + e.what());
    }
    if (stage_ms) (*stage_ms)[i].push_back(ms_between(t0, Clock::now()));
  }
  return payload;
}

}  // namespace detail

/// Run every frame through the chain in order on the calling thread.
/// The first kWarmupFrames frames (fewer on tiny runs) are excluded from the
/// statistics; zero frames are ever dropped.
inline PipelineReport run_sequential(const std::vector<StageSpec>& stages,
                                     FrameSource& source, std::size_t n_frames,
                                     const FrameSink& on_output = {}) {
  if (n_frames < 1) throw std::invalid_argument("run_sequential: n_frames must be >= 1");
  validate_chain(stages);

  const std::size_t warmup = n_frames > kWarmupFrames ? kWarmupFrames : n_frames - 1;
  std::vector<std::vector<double>> stage_ms(stages.size());
  std::vector<double> frame_ms;
  Clock::time_point measured_start{};
  std::size_t processed = 0;

  for (std::size_t i = 0; i < n_frames; ++i) {
    auto frame = source.next();
    if (!frame) break;
    const std::uint64_t fid = frame->frame_id;
    auto t0 = Clock::now();
    if (i == warmup) measured_start = t0;
    const bool measured = i >= warmup;
    backend::Payload payload = std::move(*frame);
    payload = detail::run_chain(stages, std::move(payload), fid,
                                measured ? &stage_ms : nullptr);
    if (measured) frame_ms.push_back(ms_between(t0, Clock::now()));
    if (on_output) {
      if (auto* img = std::get_if<FrameImage>(&payload)) on_output(*img);
    }
    ++processed;
  }
  if (processed == 0) throw std::runtime_error("run_sequential: source produced no frames");

  PipelineReport report;
  report.warmup_excluded = std::min(warmup, processed);
  for (std::size_t i = 0; i < stages.size(); ++i)
    report.stages.push_back(detail::summarize(stages[i].name, stage_ms[i]));
  report.end_to_end_mean_ms = detail::mean_of(frame_ms);
  report.frames_measured = frame_ms.size();
  report.dropped_frames = 0;
  if (!frame_ms.empty()) {
    report.duration_s = ms_between(measured_start, Clock::now()) / 1000.0;
    if (report.duration_s > 0.0)
      report.achieved_fps = static_cast<double>(frame_ms.size()) / report.duration_s;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Threaded runner: capture / infer / display workers over two mailboxes.

struct ThreadedRunResult {
  PipelineReport report;
  std::vector<std::uint64_t> displayed_frame_ids;
  std::uint64_t frames_captured = 0;
  std::uint64_t frames_displayed = 0;
};

namespace detail {

struct Packet {
  backend::Payload payload;
  std::uint64_t frame_id = 0;
  std::uint64_t capture_ts_ns = 0;
};

class WorkerError {
 public:
  void capture(const char* worker) {
    std::lock_guard<std::mutex> lock(mu_);
    if (!err_) {
      err_ = std::current_exception();
      worker_ = worker;
    }
  }
  void rethrow_if_any() const {
    if (!err_) return;
    try {
      std::rethrow_exception(err_);
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string(worker_) + " worker failed: " + e.what());
    }
  }
  bool has_error() const { return static_cast<bool>(err_); }

 private:
  std::mutex mu_;
  std::exception_ptr err_;
  const char* worker_ = "";
};

}  // namespace detail

/// Three workers connected by two latest-wins mailboxes: capture paces the
/// source at capture_fps, infer always consumes the freshest captured frame,
/// display consumes the freshest result. Drops are counted at overwrite time
/// in the mailboxes, the only place they can occur.
inline ThreadedRunResult run_threaded(FrameSource& source, double capture_fps,
                                      const std::vector<StageSpec>& stages,
                                      DisplaySink& sink, double duration_s,
                                      const FrameSink& on_output = {}) {
  if (!(duration_s > 0.0))
    throw std::invalid_argument("run_threaded: duration must be > 0");
  if (!(capture_fps > 0.0))
    throw std::invalid_argument("run_threaded: capture_fps must be > 0");
  validate_chain(stages);

  MailboxSlot<detail::Packet> to_infer;
  MailboxSlot<detail::Packet> to_display;
  std::atomic<bool> stop{false};
  detail::WorkerError error;

  std::vector<std::vector<double>> stage_ms(stages.size());
  std::vector<double> capture_interval_ms;
  std::vector<double> display_ms;
  std::vector<double> end_to_end_ms;
  std::vector<std::uint64_t> displayed_ids;
  std::vector<Clock::time_point> display_done;
  std::atomic<std::uint64_t> captured{0};

  const auto period = std::chrono::duration_cast<Clock::duration>(
      std::chrono::duration<double>(1.0 / capture_fps));
  constexpr std::chrono::milliseconds kPoll{5};

  std::thread capture_thread([&] {
    try {
      auto next_tick = Clock::now();
      auto last = next_tick;
      while (!stop.load(std::memory_order_relaxed)) {
        auto frame = source.next();
        if (!frame) break;
        auto now = Clock::now();
        frame->capture_timestamp_ns = now_ns();
        capture_interval_ms.push_back(ms_between(last, now));
        last = now;
        const std::uint64_t fid = frame->frame_id;
        const std::uint64_t ts = frame->capture_timestamp_ns;
        detail::Packet pkt{backend::Payload(std::move(*frame)), fid, ts};
        to_infer.put(std::move(pkt), fid);
        captured.fetch_add(1, std::memory_order_relaxed);
        next_tick += period;
        auto wake = Clock::now();
        if (next_tick < wake) next_tick = wake;  // do not burst after a stall
        std::this_thread::sleep_until(next_tick);
      }
    } catch (...) {
      error.capture("capture");
      stop.store(true);
    }
    to_infer.close();
  });

  std::thread infer_thread([&] {
    try {
      while (true) {
        auto entry = to_infer.await(kPoll);
        if (!entry) {
          if (stop.load(std::memory_order_relaxed) || to_infer.closed()) break;
          continue;
        }
        detail::Packet pkt = std::move(entry->item);
        backend::Payload payload = std::move(pkt.payload);
        for (std::size_t i = 0; i < stages.size(); ++i) {
          auto t0 = Clock::now();
          try {
            payload = stages[i].executor->process(std::move(payload));
          } catch (const std::exception& e) {
            throw std::runtime_error("stage '" + stages[i].name + "' failed at frame " +
                                     std::to_string(pkt.frame_id) + ": " + e.what());
          }
          stage_ms[i].push_back(ms_between(t0, Clock::now()));
        }
        pkt.payload = std::move(payload);
        to_display.put(std::move(pkt), pkt.frame_id);
      }
    } catch (...) {
      error.capture("infer");
      stop.store(true);
    }
    to_display.close();
  });

  std::thread display_thread([&] {
    try {
      while (true) {
        auto entry = to_display.await(kPoll);
        if (!entry) {
          if (stop.load(std::memory_order_relaxed) || to_display.closed()) break;
          continue;
        }
        auto t0 = Clock::now();
        const auto& pkt = entry->item;
        const FrameImage* img = std::get_if<FrameImage>(&pkt.payload);
        if (img) {
          sink.show(*img);
          if (on_output) on_output(*img);
        }
        auto t1 = Clock::now();
        display_ms.push_back(ms_between(t0, t1));
        displayed_ids.push_back(pkt.frame_id);
        display_done.push_back(t1);
        end_to_end_ms.push_back(
            static_cast<double>(now_ns() - pkt.capture_ts_ns) / 1e6);
      }
    } catch (...) {
      error.capture("display");
      stop.store(true);
    }
  });

  const auto run_start = Clock::now();
  const auto stop_at = run_start + std::chrono::duration_cast<Clock::duration>(
                                       std::chrono::duration<double>(duration_s));
  while (Clock::now() < stop_at && !stop.load(std::memory_order_relaxed))
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  stop.store(true);
  to_infer.close();
  to_display.close();
  capture_thread.join();
  infer_thread.join();
  display_thread.join();
  const auto run_end = Clock::now();

  error.rethrow_if_any();

  ThreadedRunResult result;
  result.displayed_frame_ids = displayed_ids;
  result.frames_captured = captured.load();
  result.frames_displayed = displayed_ids.size();

  const std::size_t warmup =
      displayed_ids.size() > kWarmupFrames ? kWarmupFrames : 0;
  auto drop_warmup = [&](std::vector<double>& v) {
    if (v.size() > warmup) v.erase(v.begin(), v.begin() + static_cast<long>(warmup));
  };

  PipelineReport& report = result.report;
  report.warmup_excluded = warmup;
  {
    std::vector<double> cap = capture_interval_ms;
    drop_warmup(cap);
    report.stages.push_back(detail::summarize("capture", cap));
  }
  for (std::size_t i = 0; i < stages.size(); ++i) {
    std::vector<double> samples = stage_ms[i];
    drop_warmup(samples);
    report.stages.push_back(detail::summarize(stages[i].name, samples));
  }
  {
    std::vector<double> disp = display_ms;
    drop_warmup(disp);
    report.stages.push_back(detail::summarize("display", disp));
  }
  std::vector<double> e2e = end_to_end_ms;
  drop_warmup(e2e);
  report.end_to_end_mean_ms = detail::mean_of(e2e);
  report.dropped_frames = to_infer.dropped() + to_display.dropped();
  report.duration_s =
      std::chrono::duration<double>(run_end - run_start).count();
  if (display_done.size() > warmup + 1) {
    const double span_s = std::chrono::duration<double>(
                              display_done.back() - display_done[warmup])
                              .count();
    const std::size_t measured = display_done.size() - warmup - 1;
    report.frames_measured = measured + 1;
    if (span_s > 0.0) report.achieved_fps = static_cast<double>(measured) / span_s;
  } else {
    report.frames_measured = display_done.size();
  }
  return result;
}

}  // namespace streamskip::engine
