#pragma once

// Fixed-interval sampler of tier byte counters, written as dstat-style CSV.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "dlio/error.hpp"
#include "dlio/fsio.hpp"

namespace dlio {

// Activity during tick t, i.e. the interval (start + t*dt, start + (t+1)*dt].
// The last sample of a trace may cover a partial tick.
struct TraceSample {
  std::uint64_t t = 0;
  std::vector<std::uint64_t> read_delta;   // one per traced tier
  std::vector<std::uint64_t> write_delta;
};

// A caller-supplied event (e.g. a checkpoint save) placed on the tick axis.
struct TraceMark {
  std::string label;
  std::uint64_t tick = 0;
  double seconds = 0.0;
};

struct Trace {
  std::vector<std::string> labels;
  std::chrono::nanoseconds interval{std::chrono::seconds(1)};
  std::vector<TraceSample> samples;
  std::vector<TraceMark> marks;
  std::vector<CounterSnapshot> first;  // snapshots bracketing the series
  std::vector<CounterSnapshot> last;
};

class TraceHandle {
 public:
  TraceHandle(std::vector<std::shared_ptr<StorageTier>> tiers, std::chrono::nanoseconds interval)
      : tiers_(std::move(tiers)), interval_(interval) {
    if (tiers_.empty()) throw InvalidArgument("start_trace needs at least one tier");
    if (interval_ <= std::chrono::nanoseconds::zero()) throw InvalidArgument("trace interval must be positive");
    trace_.interval = interval_;
    for (const auto& t : tiers_) {
      trace_.labels.push_back(t->label());
      prev_.push_back(t->snapshot_counters());
    }
    trace_.first = prev_;
    start_ = Clock::now();
    sampler_ = std::thread([this] { run(); });
  }

  TraceHandle(const TraceHandle&) = delete;
  TraceHandle& operator=(const TraceHandle&) = delete;

  ~TraceHandle() { stop(); }

  Clock::time_point start_time() const { return start_; }

  void mark(std::string label) {
    const auto elapsed = Clock::now() - start_;
    std::lock_guard lk(mu_);
    trace_.marks.push_back({std::move(label), static_cast<std::uint64_t>(elapsed / interval_),
                            std::chrono::duration<double>(elapsed).count()});
  }

  // Stops sampling, flushing the partial final tick. Repeated calls return
  // the same series.
  const Trace& stop() {
    {
      std::lock_guard lk(mu_);
      stopping_ = true;
    }
    cv_.notify_all();
    if (sampler_.joinable()) sampler_.join();
    return trace_;
  }

 private:
  void run() {
    std::uint64_t tick = 0;
    while (true) {
      const auto deadline = start_ + std::chrono::duration_cast<Clock::duration>(interval_) * (tick + 1);
      bool stopped;
      {
        std::unique_lock lk(mu_);
        stopped = cv_.wait_until(lk, deadline, [this] { return stopping_; });
      }
      sample(tick++);
      if (stopped) break;
    }
    std::lock_guard lk(mu_);
    trace_.last = prev_;
  }

  void sample(std::uint64_t tick) {
    TraceSample s;
    s.t = tick;
    for (std::size_t i = 0; i < tiers_.size(); ++i) {
      const auto now = tiers_[i]->snapshot_counters();
      s.read_delta.push_back(now.read_bytes - prev_[i].read_bytes);
      s.write_delta.push_back(now.write_bytes - prev_[i].write_bytes);
      prev_[i] = now;
    }
    std::lock_guard lk(mu_);
    trace_.samples.push_back(std::move(s));
  }

  std::vector<std::shared_ptr<StorageTier>> tiers_;
  std::chrono::nanoseconds interval_;
  std::vector<CounterSnapshot> prev_;
  Clock::time_point start_;
  std::mutex mu_;
  std::condition_variable cv_;
  bool stopping_ = false;
  Trace trace_;
  std::thread sampler_;
};

inline std::unique_ptr<TraceHandle> start_trace(std::vector<std::shared_ptr<StorageTier>> tiers,
                                                std::chrono::nanoseconds interval = std::chrono::seconds(1)) {
  return std::make_unique<TraceHandle>(std::move(tiers), interval);
}

inline Trace stop_trace(TraceHandle& handle) { return handle.stop(); }

inline std::string trace_csv_header(const std::vector<std::string>& labels) {
  std::string h = "t";
  for (const auto& l : labels) h += "," + l + "_read," + l + "_write";
  return h;
}

inline void write_trace_csv(const Trace& trace, const fs::path& out) {
  std::ofstream f(out, std::ios::trunc);
  if (!f) throw IoError(out.string(), "cannot open trace CSV for writing");
  f << trace_csv_header(trace.labels) << '\n';
  for (const auto& s : trace.samples) {
    f << s.t;
    for (std::size_t i = 0; i < s.read_delta.size(); ++i) f << ',' << s.read_delta[i] << ',' << s.write_delta[i];
    f << '\n';
  }
  if (!f) throw IoError(out.string(), "write failed");
}

}  // namespace dlio
