// SPDX-License-Identifier: Apache-2.0
//
// Repetition statistics: Tukey-fence outlier rejection and averaging of the
// surviving measurements.
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "granscale/error.hpp"

namespace granscale {

enum class OutlierSide { Both, Upper };

struct CellKey {
  std::string workload_id;
  std::int64_t workers = 1;
  std::int64_t problem_size = 1;

  auto operator<=>(const CellKey&) const = default;
};

struct SampleSet {
  CellKey cell_key;
  std::vector<double> values;
  std::int64_t target_repetitions = 10;
};

struct Fences {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
};

struct OutlierDecision {
  std::vector<double> kept;
  std::vector<double> rejected;
  // Positions of kept values in the original input, ascending.
  std::vector<std::size_t> kept_indices;
  Fences fences;
};

// Fewer values than this and no rejection takes place.
inline constexpr std::size_t kMinSamplesForRejection = 3;
inline constexpr double kTukeyK = 1.5;

/// Type-7 quantile of ascending `sorted`: position (n-1)*q, linear between neighbors.
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error("quantile: empty input");
  const double pos = static_cast<double>(sorted.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

/// First and third quartiles of an ascending list.
inline std::pair<double, double> quartiles(std::span<const double> sorted) {
  if (sorted.empty()) throw Error("quartiles: empty input");
  return {quantile_sorted(sorted, 0.25), quantile_sorted(sorted, 0.75)};
}

inline OutlierDecision filter_outliers(std::span<const double> values,
                                       OutlierSide side = OutlierSide::Both) {
  OutlierDecision d;
  if (values.size() >= kMinSamplesForRejection) {
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const auto [q1, q3] = quartiles(sorted);
    const double iqr = q3 - q1;
    d.fences.upper = q3 + kTukeyK * iqr;
    if (side == OutlierSide::Both) d.fences.lower = q1 - kTukeyK * iqr;
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    if (v >= d.fences.lower && v <= d.fences.upper) {
      d.kept.push_back(v);
      d.kept_indices.push_back(i);
    } else {
      d.rejected.push_back(v);
    }
  }
  return d;
}

struct Summary {
  double mean = 0.0;
  std::int64_t count_kept = 0;
  std::int64_t count_rejected = 0;
};

inline double mean_of(std::span<const double> values) {
  if (values.empty()) throw Error("mean: empty input");
  // Sorted summation keeps the mean independent of input order.
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
}

inline Summary summarize(const SampleSet& samples, OutlierSide side = OutlierSide::Both) {
  if (samples.values.empty()) throw Error("summarize: no samples");
  const OutlierDecision d = filter_outliers(samples.values, side);
  if (d.kept.empty()) throw Error("summarize: every sample rejected");
  return {mean_of(d.kept), static_cast<std::int64_t>(d.kept.size()),
          static_cast<std::int64_t>(d.rejected.size())};
}

}  // namespace granscale
