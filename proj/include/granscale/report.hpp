// SPDX-License-Identifier: Apache-2.0
//
// Presentation of result sets: strong-scaling speedup CSV, weak-scaling
// time/speedup tables, the fixture regression, and a scalability verdict.
// Every emitter is a pure function of its input, byte for byte.
#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "granscale/error.hpp"
#include "granscale/fixture.hpp"
#include "granscale/harness.hpp"
#include "granscale/metrics.hpp"

namespace granscale {

inline constexpr std::array<const char*, 3> kReportFlags = {"clamped_overhead", "superlinear",
                                                            "incomplete_samples"};

// Column order of strong_scaling_csv(); part of the stable interface.
inline constexpr const char* kStrongCsvHeader =
    "workers,problem_size,actual_speedup,estimated_speedup,relative_error,efficiency";

// Fixture columns S_8..S_64 are held to this tolerance.
inline constexpr double kFixtureTolerance = 0.05;
inline constexpr std::int64_t kFixtureMaxComparedWorkers = 64;

// Largest relative spread of mean wall time along a weak-scaling track.
inline constexpr double kWeakScalingBand = 0.25;

struct ReportRow {
  std::int64_t workers = 1;
  std::int64_t problem_size = 1;
  Seconds mean_wall = 0.0;
  double granularity = 0.0;
  double efficiency = 0.0;
  double estimated_speedup = 0.0;
  std::optional<double> actual_speedup;
  std::optional<double> relative_error;
  std::set<std::string> anomaly_flags;
};

enum class TableFormat { Text, Csv };

namespace detail {

// Shortest representation that round-trips.
inline std::string full_precision(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string fixed3(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline std::string optional_full(const std::optional<double>& v) {
  return v ? full_precision(*v) : std::string();
}

}  // namespace detail

inline ReportRow to_report_row(const CellResult& c) {
  ReportRow r;
  r.workers = c.cell_key.workers;
  r.problem_size = c.cell_key.problem_size;
  r.mean_wall = c.mean_wall;
  r.granularity = c.metrics.granularity;
  r.efficiency = c.metrics.efficiency;
  r.estimated_speedup = c.metrics.estimated_speedup;
  r.actual_speedup = c.actual_speedup;
  r.relative_error = c.relative_error;
  r.anomaly_flags = c.flags;
  if (c.metrics.clamped_overhead) r.anomaly_flags.insert("clamped_overhead");
  if (c.actual_speedup && *c.actual_speedup > static_cast<double>(c.cell_key.workers)) {
    r.anomaly_flags.insert("superlinear");
  }
  return r;
}

/// Rows sorted by (problem_size, workers).
inline std::vector<ReportRow> report_rows(const ResultSet& rs) {
  std::vector<ReportRow> rows;
  rows.reserve(rs.cells.size());
  for (const auto& c : rs.cells) rows.push_back(to_report_row(c));
  std::sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
    return std::pair(a.problem_size, a.workers) < std::pair(b.problem_size, b.workers);
  });
  return rows;
}

inline std::string strong_scaling_csv(const ResultSet& rs) {
  if (rs.plan.mode != ScalingMode::Strong) {
    throw Error("strong_scaling_csv: result set comes from a weak-scaling plan");
  }
  std::ostringstream os;
  os << kStrongCsvHeader << '\n';
  for (const auto& r : report_rows(rs)) {
    os << r.workers << ',' << r.problem_size << ',' << detail::optional_full(r.actual_speedup) << ','
       << detail::full_precision(r.estimated_speedup) << ',' << detail::optional_full(r.relative_error)
       << ',' << detail::full_precision(r.efficiency) << '\n';
  }
  return os.str();
}

namespace detail {

// Renders a grid of cells either as CSV (full precision, empty for missing)
// or as right-aligned text with 3 decimals.
inline std::string render_grid(const std::vector<std::string>& header,
                               const std::vector<std::vector<std::optional<double>>>& rows,
                               const std::vector<std::vector<std::string>>& row_labels, TableFormat fmt) {
  std::vector<std::vector<std::string>> cells;
  cells.push_back(header);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::vector<std::string> line = row_labels[i];
    for (const auto& v : rows[i]) {
      if (!v) line.emplace_back(fmt == TableFormat::Csv ? "" : "-");
      else line.push_back(fmt == TableFormat::Csv ? full_precision(*v) : fixed3(*v));
    }
    cells.push_back(std::move(line));
  }
  std::ostringstream os;
  if (fmt == TableFormat::Csv) {
    for (const auto& line : cells) {
      for (std::size_t j = 0; j < line.size(); ++j) os << (j ? "," : "") << line[j];
      os << '\n';
    }
    return os.str();
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t j = 0; j < line.size(); ++j) width[j] = std::max(width[j], line[j].size());
  }
  for (const auto& line : cells) {
    for (std::size_t j = 0; j < line.size(); ++j) {
      if (j) os << "  ";
      os << std::string(width[j] - line[j].size(), ' ') << line[j];
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace detail

struct WeakScalingTables {
  std::string time_table;
  std::string speedup_table;
};

/// Time table: one row per problem size, T_1 then T_p per worker count.
/// Speedup table: S_p = T(1)/T(p), plus the Gustafson scaled fraction inferred
/// from the row's largest worker count.
inline WeakScalingTables weak_scaling_tables(const ResultSet& rs, TableFormat fmt = TableFormat::Text) {
  if (rs.plan.mode != ScalingMode::Weak) {
    throw Error("weak_scaling_tables: result set comes from a strong-scaling plan");
  }
  std::vector<std::int64_t> workers;
  for (auto p : rs.plan.worker_counts) {
    if (p != 1) workers.push_back(p);
  }
  std::map<std::int64_t, std::map<std::int64_t, const CellResult*>> by_size;
  for (const auto& c : rs.cells) {
    if (!c.baseline_wall || !c.actual_speedup) {
      throw Error("weak_scaling_tables: missing serial baseline for p=" + std::to_string(c.cell_key.workers) +
                  ", W=" + std::to_string(c.cell_key.problem_size));
    }
    by_size[c.cell_key.problem_size][c.cell_key.workers] = &c;
  }

  std::vector<std::string> time_header{"problem_size", "T_1"};
  std::vector<std::string> speed_header{"problem_size"};
  for (auto p : workers) {
    time_header.push_back("T_" + std::to_string(p));
    speed_header.push_back("S_" + std::to_string(p));
  }
  speed_header.emplace_back("gustafson_fraction");

  std::vector<std::vector<std::string>> labels;
  std::vector<std::vector<std::optional<double>>> time_rows;
  std::vector<std::vector<std::optional<double>>> speed_rows;
  for (const auto& [size, row] : by_size) {
    labels.push_back({std::to_string(size)});
    std::vector<std::optional<double>> t{row.begin()->second->baseline_wall};
    std::vector<std::optional<double>> s;
    const CellResult* widest = nullptr;
    for (auto p : workers) {
      auto it = row.find(p);
      if (it == row.end()) {
        t.emplace_back();
        s.emplace_back();
        continue;
      }
      t.emplace_back(it->second->mean_wall);
      s.emplace_back(it->second->actual_speedup);
      widest = it->second;
    }
    if (widest != nullptr) {
      s.emplace_back(infer_gustafson_fraction(*widest->actual_speedup, widest->cell_key.workers).fraction);
    } else {
      s.emplace_back();
    }
    time_rows.push_back(std::move(t));
    speed_rows.push_back(std::move(s));
  }
  return {detail::render_grid(time_header, time_rows, labels, fmt),
          detail::render_grid(speed_header, speed_rows, labels, fmt)};
}

inline std::string rows_table(const ResultSet& rs) {
  std::vector<std::string> header{"problem_size", "workers", "mean_wall_s", "granularity", "efficiency",
                                  "est_speedup",  "speedup", "rel_error"};
  std::vector<std::vector<std::string>> labels;
  std::vector<std::vector<std::optional<double>>> rows;
  for (const auto& r : report_rows(rs)) {
    labels.push_back({std::to_string(r.problem_size), std::to_string(r.workers)});
    rows.push_back({r.mean_wall, r.granularity, r.efficiency,
                    r.estimated_speedup, r.actual_speedup, r.relative_error});
  }
  return detail::render_grid(header, rows, labels, TableFormat::Text);
}

inline nlohmann::json rows_json(const ResultSet& rs) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : report_rows(rs)) {
    out.push_back({{"workers", r.workers},
                   {"problem_size", r.problem_size},
                   {"mean_wall_s", r.mean_wall},
                   {"granularity", detail::granularity_to_json(r.granularity)},
                   {"efficiency", r.efficiency},
                   {"estimated_speedup", r.estimated_speedup},
                   {"actual_speedup", detail::optional_to_json(r.actual_speedup)},
                   {"relative_error", detail::optional_to_json(r.relative_error)},
                   {"anomaly_flags", r.anomaly_flags}});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fixture regression

struct FixtureCell {
  std::int64_t problem_size = 0;
  std::int64_t workers = 0;
  double computed = 0.0;   // T_1 / T_p from the time table
  double published = 0.0;  // speedup table entry
  double deviation = 0.0;  // (computed - published) / published
  bool compared = false;   // column is held to kFixtureTolerance
  bool excluded = false;   // listed in fixture::kAnomalousCells
  const char* note = "";
};

struct FixtureValidation {
  std::vector<FixtureCell> cells;
  bool passed = true;

  std::vector<FixtureCell> failures() const {
    std::vector<FixtureCell> out;
    for (const auto& c : cells) {
      if (c.compared && !c.excluded && std::abs(c.deviation) > kFixtureTolerance) out.push_back(c);
    }
    return out;
  }

  std::string render() const {
    std::ostringstream os;
    char line[256];
    std::snprintf(line, sizeof line, "%10s %5s %12s %12s %10s  %s\n", "size", "p", "T1/Tp", "published",
                  "deviation", "status");
    os << line;
    for (const auto& c : cells) {
      const char* status = c.excluded ? "excluded" : !c.compared ? "info" :
                           std::abs(c.deviation) <= kFixtureTolerance ? "ok" : "FAIL";
      std::snprintf(line, sizeof line, "%10lld %5lld %12.3f %12.3f %9.2f%%  %s", static_cast<long long>(c.problem_size),
                    static_cast<long long>(c.workers), c.computed, c.published, 100.0 * c.deviation, status);
      os << line;
      if (c.excluded) os << "  (" << c.note << ')';
      os << '\n';
    }
    os << (passed ? "PASS" : "FAIL") << ": columns S_8..S_" << kFixtureMaxComparedWorkers << " within "
       << kFixtureTolerance * 100 << "% of T_1/T_p, anomalous cells excluded\n";
    return os.str();
  }
};

inline const fixture::AnomalousCell* find_anomaly(std::int64_t size, std::int64_t workers) {
  for (const auto& a : fixture::kAnomalousCells) {
    if (a.problem_size == size && a.workers == workers) return &a;
  }
  return nullptr;
}

inline FixtureValidation validate_fixture() {
  FixtureValidation v;
  for (std::size_t i = 0; i < fixture::kProblemSizes.size(); ++i) {
    const auto& times = fixture::kExecutionTimes[i];
    for (std::size_t j = 0; j < fixture::kWorkerCounts.size(); ++j) {
      FixtureCell c;
      c.problem_size = fixture::kProblemSizes[i];
      c.workers = fixture::kWorkerCounts[j];
      c.computed = times[0] / times[j + 1];
      c.published = fixture::kSpeedups[i][j];
      c.deviation = (c.computed - c.published) / c.published;
      c.compared = c.workers <= kFixtureMaxComparedWorkers;
      if (const auto* a = find_anomaly(c.problem_size, c.workers)) {
        c.excluded = true;
        c.note = a->note;
      }
      v.cells.push_back(c);
    }
  }
  v.passed = v.failures().empty();
  return v;
}

/// Fixture as a weak-mode ResultSet (times as means, T_1 as baseline), so it
/// can be fed through the regular table emitters.
inline ResultSet fixture_result_set() {
  ResultSet rs;
  rs.plan.mode = ScalingMode::Weak;
  rs.plan.workload = KMeansSpec{};
  rs.plan.worker_counts.assign(fixture::kWorkerCounts.begin(), fixture::kWorkerCounts.end());
  rs.plan.base_problem_size = fixture::kProblemSizes.front();
  for (std::size_t i = 0; i < fixture::kProblemSizes.size(); ++i) {
    const auto& times = fixture::kExecutionTimes[i];
    for (std::size_t j = 0; j < fixture::kWorkerCounts.size(); ++j) {
      CellResult c;
      c.cell_key = {"kmeans", fixture::kWorkerCounts[j], fixture::kProblemSizes[i]};
      c.mean_wall = times[j + 1];
      c.baseline_wall = times[0];
      c.actual_speedup = times[0] / times[j + 1];
      rs.cells.push_back(c);
    }
  }
  return rs;
}

// ---------------------------------------------------------------------------
// Verdict

/// (max - min) / min of a track's mean wall times.
inline double wall_time_spread(std::span<const double> walls) {
  if (walls.empty()) throw Error("wall_time_spread: empty track");
  const auto [lo, hi] = std::minmax_element(walls.begin(), walls.end());
  return (*hi - *lo) / *lo;
}

struct ScalabilityVerdict {
  bool scalable = true;
  std::vector<CellKey> failing_cells;
  std::string text;
};

/// Strong: scalable iff, for every problem size, efficiency at the largest
/// worker count is >= efficiency_floor; every cell below the floor is listed.
/// Weak: scalable iff mean wall time spreads <= kWeakScalingBand along every
/// fixed per-worker-size track; cells of failing tracks are listed.
inline ScalabilityVerdict scalability_verdict(const ResultSet& rs, double efficiency_floor = 0.5) {
  if (rs.cells.empty()) throw Error("scalability_verdict: empty result set");
  ScalabilityVerdict v;
  std::ostringstream os;
  if (rs.plan.mode == ScalingMode::Strong) {
    std::map<std::int64_t, const CellResult*> widest;
    for (const auto& c : rs.cells) {
      auto& w = widest[c.cell_key.problem_size];
      if (w == nullptr || c.cell_key.workers > w->cell_key.workers) w = &c;
      if (c.metrics.efficiency < efficiency_floor) v.failing_cells.push_back(c.cell_key);
    }
    for (const auto& [size, c] : widest) {
      if (c->metrics.efficiency < efficiency_floor) v.scalable = false;
    }
    os << (v.scalable ? "scalable" : "not scalable") << " (strong scaling, efficiency floor "
       << detail::fixed3(efficiency_floor) << ")\n";
  } else {
    // Tracks keyed by per-worker size; weak plans produce exact multiples.
    std::map<std::pair<std::int64_t, std::int64_t>, std::vector<const CellResult*>> tracks;
    for (const auto& c : rs.cells) {
      const auto g = std::gcd(c.cell_key.problem_size, c.cell_key.workers);
      tracks[{c.cell_key.problem_size / g, c.cell_key.workers / g}].push_back(&c);
    }
    for (const auto& [key, cells] : tracks) {
      std::vector<double> walls;
      for (const auto* c : cells) walls.push_back(c->mean_wall);
      const double spread = wall_time_spread(walls);
      if (spread > kWeakScalingBand) {
        v.scalable = false;
        for (const auto* c : cells) v.failing_cells.push_back(c->cell_key);
      }
      os << "track W/p=" << detail::fixed3(static_cast<double>(key.first) / static_cast<double>(key.second))
         << ": wall spread " << detail::fixed3(100.0 * spread) << "%\n";
    }
    const std::string body = os.str();
    os.str("");
    os << (v.scalable ? "scalable" : "not scalable") << " (weak scaling, wall-time band "
       << detail::fixed3(100.0 * kWeakScalingBand) << "%)\n"
       << body;
  }
  for (const auto& k : v.failing_cells) {
    os << "  failing: p=" << k.workers << " W=" << k.problem_size << '\n';
  }
  v.text = os.str();
  return v;
}

}  // namespace granscale
