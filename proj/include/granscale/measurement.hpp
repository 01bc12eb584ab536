// SPDX-License-Identifier: Apache-2.0
//
// Span instrumentation for a single parallel run.
//
// A RunHandle owns the wall-clock envelope of one execution and a per-worker
// span buffer. Workers time their compute regions (ScopedSpan does this) and
// submit the durations; communication and barrier waits are simply left
// untimed, so they end up in the overhead term.
#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "granscale/error.hpp"
#include "granscale/metrics.hpp"

namespace granscale {

// One monotonic clock for spans and wall time alike.
using Clock = std::chrono::steady_clock;

inline Seconds to_seconds(Clock::duration d) {
  return std::chrono::duration<double>(d).count();
}

struct Span {
  std::int64_t worker_id = 0;
  Seconds duration = 0.0;
  std::string phase_label;

  bool operator==(const Span&) const = default;
};

struct RunRecord {
  std::string run_id;
  std::string workload_id;
  std::int64_t workers = 1;
  std::int64_t problem_size = 1;
  std::uint64_t seed = 0;
  Seconds wall_clock = 0.0;
  std::vector<Span> spans;
  std::int64_t iterations = 0;
  std::string started_at;  // UTC, ISO-8601; metadata only
  // Some worker in [0, workers) submitted no span.
  bool incomplete_worker_coverage = false;
};

namespace detail {

inline std::string utc_now_iso8601() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string fresh_run_id() {
  static std::atomic<std::uint64_t> counter{0};
  static const std::uint64_t salt = [] {
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  }();
  const std::uint64_t id = salt ^ (counter.fetch_add(1) * 0x9E3779B97F4A7C15ULL);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) out[15 - i] = hex[(id >> (4 * i)) & 0xF];
  return out;
}

}  // namespace detail

/// Live run. Shared by reference among the run's workers.
class RunHandle {
 public:
  RunHandle(std::string workload_id, std::int64_t workers, std::int64_t problem_size,
            std::uint64_t seed)
      : workload_id_(std::move(workload_id)),
        workers_(workers),
        problem_size_(problem_size),
        seed_(seed) {
    if (workers < 1) throw Error("begin_run: workers must be >= 1");
    if (problem_size < 1) throw Error("begin_run: problem_size must be >= 1");
    buffers_ = std::make_unique<WorkerBuffer[]>(static_cast<std::size_t>(workers));
    started_at_ = detail::utc_now_iso8601();
    start_ = Clock::now();
  }

  RunHandle(const RunHandle&) = delete;
  RunHandle& operator=(const RunHandle&) = delete;

  std::int64_t workers() const { return workers_; }
  std::int64_t problem_size() const { return problem_size_; }
  std::uint64_t seed() const { return seed_; }
  const std::string& workload_id() const { return workload_id_; }
  bool finished() const { return finished_.load(std::memory_order_acquire); }

  // Safe to call concurrently from every worker. Each worker appends to its
  // own buffer, so the per-buffer lock is uncontended in normal use.
  void record_span(std::int64_t worker_id, Seconds duration, std::string phase_label) {
    if (finished()) throw Error("record_span: run already finished");
    if (worker_id < 0 || worker_id >= workers_) {
      throw Error("record_span: worker_id " + std::to_string(worker_id) + " out of range [0, " +
                  std::to_string(workers_) + ")");
    }
    if (!(duration >= 0.0)) throw Error("record_span: duration must be >= 0");
    auto& buf = buffers_[static_cast<std::size_t>(worker_id)];
    std::lock_guard lock(buf.mutex);
    buf.spans.push_back(Span{worker_id, duration, std::move(phase_label)});
  }

  void set_iterations(std::int64_t n) { iterations_.store(n, std::memory_order_relaxed); }

  std::size_t span_count() const {
    std::size_t n = 0;
    for (std::int64_t w = 0; w < workers_; ++w) {
      auto& buf = buffers_[static_cast<std::size_t>(w)];
      std::lock_guard lock(buf.mutex);
      n += buf.spans.size();
    }
    return n;
  }

  /// Stops the wall clock and merges the per-worker buffers.
  RunRecord finish() {
    const auto end = Clock::now();
    if (finished_.exchange(true, std::memory_order_acq_rel)) {
      throw Error("finish_run: run already finished");
    }
    RunRecord r;
    r.run_id = detail::fresh_run_id();
    r.workload_id = workload_id_;
    r.workers = workers_;
    r.problem_size = problem_size_;
    r.seed = seed_;
    r.wall_clock = to_seconds(end - start_);
    r.iterations = iterations_.load(std::memory_order_relaxed);
    r.started_at = started_at_;
    for (std::int64_t w = 0; w < workers_; ++w) {
      auto& buf = buffers_[static_cast<std::size_t>(w)];
      std::lock_guard lock(buf.mutex);
      if (buf.spans.empty()) r.incomplete_worker_coverage = true;
      r.spans.insert(r.spans.end(), std::make_move_iterator(buf.spans.begin()),
                     std::make_move_iterator(buf.spans.end()));
      buf.spans.clear();
    }
    return r;
  }

 private:
  struct alignas(64) WorkerBuffer {
    mutable std::mutex mutex;
    std::vector<Span> spans;
  };

  std::string workload_id_;
  std::int64_t workers_;
  std::int64_t problem_size_;
  std::uint64_t seed_;
  std::string started_at_;
  Clock::time_point start_;
  std::unique_ptr<WorkerBuffer[]> buffers_;
  std::atomic<std::int64_t> iterations_{0};
  std::atomic<bool> finished_{false};
};

inline std::unique_ptr<RunHandle> begin_run(std::string workload_id, std::int64_t workers,
                                            std::int64_t problem_size, std::uint64_t seed) {
  return std::make_unique<RunHandle>(std::move(workload_id), workers, problem_size, seed);
}

inline void record_span(RunHandle& h, std::int64_t worker_id, Seconds duration,
                        std::string phase_label) {
  h.record_span(worker_id, duration, std::move(phase_label));
}

inline RunRecord finish_run(RunHandle& h) { return h.finish(); }

/// Times the enclosing scope and records it as a compute span. The span is
/// submitted after the end timestamp is taken, so recording cost stays outside.
class ScopedSpan {
 public:
  ScopedSpan(RunHandle& handle, std::int64_t worker_id, const char* phase)
      : handle_(handle), worker_id_(worker_id), phase_(phase), start_(Clock::now()) {}

  ~ScopedSpan() noexcept(false) {
    const auto end = Clock::now();
    if (std::uncaught_exceptions() == 0) {
      handle_.record_span(worker_id_, to_seconds(end - start_), phase_);
    }
  }

  ScopedSpan(const ScopedSpan&) = delete;
  ScopedSpan& operator=(const ScopedSpan&) = delete;

 private:
  RunHandle& handle_;
  std::int64_t worker_id_;
  const char* phase_;
  Clock::time_point start_;
};

/// Sums every span into a TimingBreakdown. The sum is taken in
/// (worker_id, duration) order so it does not depend on arrival order.
inline TimingBreakdown aggregate(const RunRecord& record) {
  if (record.incomplete_worker_coverage) {
    throw Error("aggregate: incomplete worker coverage in run " + record.run_id);
  }
  std::vector<std::pair<std::int64_t, double>> keyed;
  keyed.reserve(record.spans.size());
  for (const auto& s : record.spans) keyed.emplace_back(s.worker_id, s.duration);
  std::sort(keyed.begin(), keyed.end());
  double total = 0.0;
  for (const auto& [w, d] : keyed) total += d;
  return TimingBreakdown(record.workers, record.wall_clock, total);
}

inline void to_json(nlohmann::json& j, const RunRecord& r) {
  nlohmann::json spans = nlohmann::json::array();
  for (const auto& s : r.spans) {
    spans.push_back({{"worker", s.worker_id}, {"duration_s", s.duration}, {"phase", s.phase_label}});
  }
  j = nlohmann::json{{"run_id", r.run_id},
                     {"workload_id", r.workload_id},
                     {"workers", r.workers},
                     {"problem_size", r.problem_size},
                     {"seed", r.seed},
                     {"wall_clock_s", r.wall_clock},
                     {"iterations", r.iterations},
                     {"started_at", r.started_at},
                     {"spans", std::move(spans)}};
}

inline void from_json(const nlohmann::json& j, RunRecord& r) {
  j.at("run_id").get_to(r.run_id);
  j.at("workload_id").get_to(r.workload_id);
  j.at("workers").get_to(r.workers);
  j.at("problem_size").get_to(r.problem_size);
  j.at("seed").get_to(r.seed);
  j.at("wall_clock_s").get_to(r.wall_clock);
  j.at("iterations").get_to(r.iterations);
  j.at("started_at").get_to(r.started_at);
  r.spans.clear();
  std::vector<bool> seen(static_cast<std::size_t>(std::max<std::int64_t>(r.workers, 0)), false);
  for (const auto& s : j.at("spans")) {
    Span span{s.at("worker").get<std::int64_t>(), s.at("duration_s").get<double>(),
              s.at("phase").get<std::string>()};
    if (span.worker_id >= 0 && span.worker_id < r.workers) {
      seen[static_cast<std::size_t>(span.worker_id)] = true;
    }
    r.spans.push_back(std::move(span));
  }
  r.incomplete_worker_coverage = std::find(seen.begin(), seen.end(), false) != seen.end();
}

}  // namespace granscale
