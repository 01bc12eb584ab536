// SPDX-License-Identifier: Apache-2.0
//
// Speedup, efficiency and overhead arithmetic for a single parallel run,
// plus the Amdahl / Gustafson scaling laws and their inverses.
//
// The estimator needs only two measurements from one parallel execution:
// the wall-clock time T_p and the summed computation time of all workers.
//
//   overhead      T_o   = p * T_p - total_comp
//   granularity   G_iso = total_comp / T_o
//   efficiency    E     = G / (G + 1)
//   speedup       S     = E * p
//
// All functions here are pure and safe to call concurrently.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "granscale/error.hpp"

namespace granscale {

using Seconds = double;

// Returned by isogranularity() when the overhead is below kOverheadFloor.
inline constexpr double kInfiniteGranularity = std::numeric_limits<double>::infinity();

// Overheads smaller than this are indistinguishable from timer noise.
inline constexpr Seconds kOverheadFloor = 1e-9;

// Slack for comparing summed compute time against available worker-seconds.
inline constexpr double kTimerSlack = 1e-6;

inline bool is_infinite_granularity(double g) { return std::isinf(g) && g > 0; }

/// One run reduced to worker count, wall-clock time and summed compute time.
class TimingBreakdown {
 public:
  TimingBreakdown(std::int64_t workers, Seconds wall_clock, Seconds total_comp)
      : workers_(workers), wall_clock_(wall_clock), total_comp_(total_comp) {
    if (workers < 1) {
      throw InvariantError("TimingBreakdown: workers must be >= 1");
    }
    if (!(wall_clock > 0.0) || !std::isfinite(wall_clock)) {
      throw InvariantError("TimingBreakdown: wall_clock must be > 0");
    }
    if (!(total_comp >= 0.0) || !std::isfinite(total_comp)) {
      throw InvariantError("TimingBreakdown: total_comp must be >= 0");
    }
    if (total_comp > static_cast<double>(workers) * wall_clock * (1.0 + kTimerSlack)) {
      throw InvariantError(
          "TimingBreakdown: total_comp exceeds workers x wall_clock");
    }
  }

  std::int64_t workers() const { return workers_; }
  Seconds wall_clock() const { return wall_clock_; }
  Seconds total_comp() const { return total_comp_; }

 private:
  std::int64_t workers_;
  Seconds wall_clock_;
  Seconds total_comp_;
};

struct Overhead {
  Seconds value = 0.0;
  // Raw value was negative (timer noise) and has been clamped to zero.
  bool clamped = false;
};

inline Overhead compute_overhead(const TimingBreakdown& b) {
  const double raw = static_cast<double>(b.workers()) * b.wall_clock() - b.total_comp();
  if (raw < 0.0) return {0.0, true};
  return {raw, false};
}

/// total_comp / overhead, or kInfiniteGranularity when overhead < kOverheadFloor.
inline double isogranularity(Seconds total_comp, Seconds overhead) {
  if (total_comp < 0.0 || overhead < 0.0) {
    throw Error("isogranularity: inputs must be nonnegative");
  }
  if (total_comp == 0.0 && overhead == 0.0) {
    throw Error("isogranularity: empty measurement");
  }
  if (overhead < kOverheadFloor) return kInfiniteGranularity;
  return total_comp / overhead;
}

inline double efficiency_from_granularity(double g) {
  if (is_infinite_granularity(g)) return 1.0;
  if (g <= 0.0) return 0.0;
  return g / (g + 1.0);
}

inline double estimated_speedup(double efficiency, std::int64_t workers) {
  return efficiency * static_cast<double>(workers);
}

struct GranularityMetrics {
  Seconds overhead = 0.0;
  double granularity = 0.0;
  double efficiency = 0.0;
  double estimated_speedup = 0.0;
  bool clamped_overhead = false;
};

/// Full estimator pipeline over one TimingBreakdown.
inline GranularityMetrics granularity_metrics(const TimingBreakdown& b) {
  GranularityMetrics m;
  const Overhead o = compute_overhead(b);
  m.overhead = o.value;
  m.clamped_overhead = o.clamped;
  m.granularity = isogranularity(b.total_comp(), o.value);
  m.efficiency = efficiency_from_granularity(m.granularity);
  m.estimated_speedup = estimated_speedup(m.efficiency, b.workers());
  return m;
}

// Amdahl's fraction is the share of the serial runtime that parallelizes;
// Gustafson's is the share of the parallel runtime spent in parallel work.
class ScalingModelParams {
 public:
  ScalingModelParams(double parallel_fraction, double scaled_parallel_fraction)
      : parallel_fraction_(parallel_fraction),
        scaled_parallel_fraction_(scaled_parallel_fraction) {
    auto in_unit = [](double f) { return f >= 0.0 && f <= 1.0; };
    if (!in_unit(parallel_fraction) || !in_unit(scaled_parallel_fraction)) {
      throw InvariantError("ScalingModelParams: fractions must lie in [0, 1]");
    }
  }

  static ScalingModelParams amdahl(double f) { return {f, 0.0}; }
  static ScalingModelParams gustafson(double f) { return {0.0, f}; }

  double parallel_fraction() const { return parallel_fraction_; }
  double scaled_parallel_fraction() const { return scaled_parallel_fraction_; }

 private:
  double parallel_fraction_;
  double scaled_parallel_fraction_;
};

inline double amdahl_speedup(const ScalingModelParams& params, std::int64_t n) {
  if (n < 1) throw Error("amdahl_speedup: n must be >= 1");
  const double f = params.parallel_fraction();
  return 1.0 / ((1.0 - f) + f / static_cast<double>(n));
}

inline double gustafson_speedup(const ScalingModelParams& params, std::int64_t n) {
  if (n < 1) throw Error("gustafson_speedup: n must be >= 1");
  return 1.0 + static_cast<double>(n - 1) * params.scaled_parallel_fraction();
}

struct FractionEstimate {
  double fraction = 0.0;
  // Raw inverse fell outside [0, 1] (superlinear or sub-serial speedup).
  bool anomaly = false;
};

namespace detail {
inline FractionEstimate clamp_fraction(double raw) {
  if (std::isnan(raw)) return {0.0, true};
  if (raw < 0.0) return {0.0, true};
  if (raw > 1.0) return {1.0, true};
  return {raw, false};
}
}  // namespace detail

inline FractionEstimate infer_amdahl_fraction(double measured_speedup, std::int64_t n) {
  if (n < 2) throw Error("infer_amdahl_fraction: n must be >= 2");
  if (!(measured_speedup > 0.0)) return {0.0, true};
  const double raw =
      (1.0 / measured_speedup - 1.0) / (1.0 / static_cast<double>(n) - 1.0);
  return detail::clamp_fraction(raw);
}

inline FractionEstimate infer_gustafson_fraction(double measured_speedup, std::int64_t n) {
  if (n < 2) throw Error("infer_gustafson_fraction: n must be >= 2");
  const double raw = (measured_speedup - 1.0) / static_cast<double>(n - 1);
  return detail::clamp_fraction(raw);
}

/// Signed (estimated - actual) / actual.
inline double relative_error(double actual_speedup, double estimated) {
  if (!(actual_speedup > 0.0)) {
    throw Error("relative_error: actual speedup must be > 0");
  }
  return (estimated - actual_speedup) / actual_speedup;
}

}  // namespace granscale
