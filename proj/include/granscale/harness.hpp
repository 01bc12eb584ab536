// SPDX-License-Identifier: Apache-2.0
//
// Experiment planning and execution.
//
// A plan expands into (workers, problem_size) cells. Each cell gets one
// untimed warm-up run, then `repetitions` counted runs; wall-clock outliers
// are rejected with Tukey fences (whole runs are dropped), optionally
// re-measured, and the surviving runs are averaged into one TimingBreakdown.
//
// Results are JSON Lines: a header {plan_hash, plan, tool_version} followed by
// one CellResult per line, appended and flushed after every cell so an
// interrupted sweep can be resumed.
#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "granscale/error.hpp"
#include "granscale/measurement.hpp"
#include "granscale/metrics.hpp"
#include "granscale/stats.hpp"
#include "granscale/version.hpp"
#include "granscale/workloads.hpp"

namespace granscale {

enum class ScalingMode { Strong, Weak };

// Extra runs allowed per cell to replace rejected outliers.
inline constexpr int kMaxOutlierReruns = 3;

struct ExperimentPlan {
  WorkloadSpec workload = SyntheticSpec{};
  ScalingMode mode = ScalingMode::Strong;
  std::vector<std::int64_t> worker_counts;
  std::int64_t base_problem_size = 1;
  std::vector<std::int64_t> problem_sizes;  // strong mode; empty means {base_problem_size}
  std::int64_t repetitions = 10;
  bool measure_serial_baseline = true;
  std::uint64_t seed = 42;
  bool rerun_outliers = true;
  OutlierSide outlier_side = OutlierSide::Both;
  bool warmup = true;
  // Free-form notes such as the host's core topology. Not interpreted.
  nlohmann::json metadata = nlohmann::json::object();

  void validate() const {
    if (worker_counts.empty()) throw InvariantError("plan: worker_counts is empty");
    for (std::size_t i = 0; i < worker_counts.size(); ++i) {
      if (worker_counts[i] < 1) throw InvariantError("plan: worker counts must be >= 1");
      if (i > 0 && worker_counts[i] <= worker_counts[i - 1]) {
        throw InvariantError("plan: worker_counts must be strictly ascending");
      }
    }
    if (base_problem_size < 1) throw InvariantError("plan: base_problem_size must be >= 1");
    for (auto s : problem_sizes) {
      if (s < 1) throw InvariantError("plan: problem sizes must be >= 1");
    }
    if (repetitions < 1) throw InvariantError("plan: repetitions must be >= 1");
    std::visit([](const auto& s) { s.validate(); }, workload);
  }
};

inline std::string to_string(ScalingMode m) { return m == ScalingMode::Strong ? "strong" : "weak"; }
inline std::string to_string(OutlierSide s) { return s == OutlierSide::Both ? "both" : "upper"; }

inline void to_json(nlohmann::json& j, const ExperimentPlan& p) {
  j = nlohmann::json{{"workload", p.workload},
                     {"mode", to_string(p.mode)},
                     {"worker_counts", p.worker_counts},
                     {"base_problem_size", p.base_problem_size},
                     {"problem_sizes", p.problem_sizes},
                     {"repetitions", p.repetitions},
                     {"measure_serial_baseline", p.measure_serial_baseline},
                     {"seed", p.seed},
                     {"rerun_outliers", p.rerun_outliers},
                     {"outlier_side", to_string(p.outlier_side)},
                     {"warmup", p.warmup},
                     {"metadata", p.metadata}};
}

inline void from_json(const nlohmann::json& j, ExperimentPlan& p) {
  p = ExperimentPlan{};
  j.at("workload").get_to(p.workload);
  const auto mode = j.value("mode", std::string("strong"));
  if (mode == "strong") p.mode = ScalingMode::Strong;
  else if (mode == "weak") p.mode = ScalingMode::Weak;
  else throw Error("plan: unknown mode '" + mode + "'");
  j.at("worker_counts").get_to(p.worker_counts);
  p.base_problem_size = j.value("base_problem_size", p.base_problem_size);
  p.problem_sizes = j.value("problem_sizes", p.problem_sizes);
  p.repetitions = j.value("repetitions", p.repetitions);
  p.measure_serial_baseline = j.value("measure_serial_baseline", p.measure_serial_baseline);
  p.seed = j.value("seed", p.seed);
  p.rerun_outliers = j.value("rerun_outliers", p.rerun_outliers);
  const auto side = j.value("outlier_side", std::string("both"));
  if (side == "both") p.outlier_side = OutlierSide::Both;
  else if (side == "upper") p.outlier_side = OutlierSide::Upper;
  else throw Error("plan: unknown outlier_side '" + side + "'");
  p.warmup = j.value("warmup", p.warmup);
  if (j.contains("metadata")) p.metadata = j.at("metadata");
}

inline ExperimentPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open plan file " + path.string());
  ExperimentPlan plan;
  try {
    plan = nlohmann::json::parse(in).get<ExperimentPlan>();
  } catch (const nlohmann::json::exception& e) {
    throw Error("plan file " + path.string() + ": " + e.what());
  }
  plan.validate();
  return plan;
}

/// GRANSCALE_SEED, when set, replaces the plan seed.
inline void apply_env_overrides(ExperimentPlan& plan) {
  if (const char* s = std::getenv("GRANSCALE_SEED"); s != nullptr && *s != '\0') {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s, &end, 10);
    if (end == s || *end != '\0') throw Error("GRANSCALE_SEED is not an unsigned integer");
    plan.seed = v;
  }
}

/// FNV-1a 64 of the canonical (sorted-key, compact) plan JSON, as 16 hex digits.
inline std::string plan_hash(const ExperimentPlan& plan) {
  const std::string canon = nlohmann::json(plan).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canon) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

struct Cell {
  std::int64_t workers = 1;
  std::int64_t problem_size = 1;
  bool operator==(const Cell&) const = default;
};

/// Strong: every worker count x every problem size. Weak: one cell per worker
/// count with problem_size / workers fixed at base_problem_size / min(workers).
/// Ordered by ascending workers, then ascending problem size.
inline std::vector<Cell> plan_cells(const ExperimentPlan& plan) {
  plan.validate();
  std::vector<Cell> cells;
  if (plan.mode == ScalingMode::Strong) {
    std::set<std::int64_t> sizes(plan.problem_sizes.begin(), plan.problem_sizes.end());
    if (sizes.empty()) sizes.insert(plan.base_problem_size);
    for (auto p : plan.worker_counts) {
      for (auto w : sizes) cells.push_back({p, w});
    }
  } else {
    const std::int64_t min_p = plan.worker_counts.front();
    if (plan.base_problem_size % min_p != 0) {
      throw Error("plan: weak scaling needs base_problem_size divisible by the smallest worker count (" +
                  std::to_string(plan.base_problem_size) + " / " + std::to_string(min_p) + ")");
    }
    const std::int64_t per_worker = plan.base_problem_size / min_p;
    for (auto p : plan.worker_counts) cells.push_back({p, per_worker * p});
  }
  return cells;
}

// ---------------------------------------------------------------------------
// Results

struct CellResult {
  CellKey cell_key;
  std::uint64_t seed = 0;
  Seconds mean_wall = 0.0;
  Seconds mean_total_comp = 0.0;
  GranularityMetrics metrics;
  std::optional<Seconds> baseline_wall;  // T(1) at the same problem size
  std::optional<double> actual_speedup;
  std::optional<double> relative_error;
  std::int64_t runs = 0;  // counted runs, including re-measurements
  std::int64_t kept = 0;
  std::int64_t rejected = 0;
  std::set<std::string> flags;
  std::string completed_at;
};

struct ResultSet {
  std::string plan_hash;
  ExperimentPlan plan;
  std::string tool_version = kToolVersion;
  std::vector<CellResult> cells;
};

namespace detail {

inline nlohmann::json granularity_to_json(double g) {
  if (is_infinite_granularity(g)) return "infinite";
  return g;
}

inline double granularity_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() != "infinite") throw Error("bad granularity value");
    return kInfiniteGranularity;
  }
  return j.get<double>();
}

template <typename T>
nlohmann::json optional_to_json(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <typename T>
std::optional<T> optional_from_json(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const CellResult& c) {
  j = nlohmann::json{
      {"workload_id", c.cell_key.workload_id},
      {"workers", c.cell_key.workers},
      {"problem_size", c.cell_key.problem_size},
      {"seed", c.seed},
      {"mean_wall_s", c.mean_wall},
      {"mean_total_comp_s", c.mean_total_comp},
      {"overhead_s", c.metrics.overhead},
      {"granularity", detail::granularity_to_json(c.metrics.granularity)},
      {"efficiency", c.metrics.efficiency},
      {"estimated_speedup", c.metrics.estimated_speedup},
      {"baseline_wall_s", detail::optional_to_json(c.baseline_wall)},
      {"actual_speedup", detail::optional_to_json(c.actual_speedup)},
      {"relative_error", detail::optional_to_json(c.relative_error)},
      {"runs", c.runs},
      {"kept", c.kept},
      {"rejected", c.rejected},
      {"flags", c.flags},
      {"completed_at", c.completed_at}};
}

inline void from_json(const nlohmann::json& j, CellResult& c) {
  c = CellResult{};
  j.at("workload_id").get_to(c.cell_key.workload_id);
  j.at("workers").get_to(c.cell_key.workers);
  j.at("problem_size").get_to(c.cell_key.problem_size);
  j.at("seed").get_to(c.seed);
  j.at("mean_wall_s").get_to(c.mean_wall);
  j.at("mean_total_comp_s").get_to(c.mean_total_comp);
  j.at("overhead_s").get_to(c.metrics.overhead);
  c.metrics.granularity = detail::granularity_from_json(j.at("granularity"));
  j.at("efficiency").get_to(c.metrics.efficiency);
  j.at("estimated_speedup").get_to(c.metrics.estimated_speedup);
  c.baseline_wall = detail::optional_from_json<double>(j, "baseline_wall_s");
  c.actual_speedup = detail::optional_from_json<double>(j, "actual_speedup");
  c.relative_error = detail::optional_from_json<double>(j, "relative_error");
  if (c.actual_speedup.has_value() != c.relative_error.has_value()) {
    throw Error("actual_speedup and relative_error must be present together");
  }
  j.at("runs").get_to(c.runs);
  j.at("kept").get_to(c.kept);
  j.at("rejected").get_to(c.rejected);
  j.at("flags").get_to(c.flags);
  c.metrics.clamped_overhead = c.flags.count("clamped_overhead") > 0;
  j.at("completed_at").get_to(c.completed_at);
}

inline std::string header_line(const ResultSet& rs) {
  nlohmann::json h{{"plan_hash", rs.plan_hash},
                           {"plan", nlohmann::json(rs.plan)},
                           {"tool_version", rs.tool_version}};
  return h.dump();
}

inline std::string cell_line(const CellResult& c) { return nlohmann::json(c).dump(); }

/// Reads a results file. Errors name the first line that fails to parse.
inline ResultSet load_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open results file " + path.string());
  ResultSet rs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (lineno == 1) {
        j.at("plan_hash").get_to(rs.plan_hash);
        j.at("plan").get_to(rs.plan);
        j.at("tool_version").get_to(rs.tool_version);
      } else {
        rs.cells.push_back(j.get<CellResult>());
      }
    } catch (const std::exception& e) {
      throw Error("results file " + path.string() + ": bad record at line " +
                  std::to_string(lineno) + ": " + e.what());
    }
  }
  if (lineno == 0) throw Error("results file " + path.string() + ": missing header");
  return rs;
}

// ---------------------------------------------------------------------------
// Execution

struct HarnessOptions {
  RunOptions run;
  // Stop after this many newly executed cells (simulates an interrupted sweep).
  std::optional<std::size_t> max_new_cells;
  // Also append every raw RunRecord to "<out>.runs.jsonl".
  bool write_runs = true;
  std::ostream* log = nullptr;
};

/// A workload failed; carries the failing cell.
class CellFailure : public Error {
 public:
  CellFailure(const CellKey& key, const std::string& what)
      : Error("cell (" + key.workload_id + ", p=" + std::to_string(key.workers) +
              ", W=" + std::to_string(key.problem_size) + "): " + what),
        key_(key) {}
  const CellKey& cell_key() const { return key_; }

 private:
  CellKey key_;
};

namespace detail {

struct Measured {
  Seconds mean_wall = 0.0;
  Seconds mean_comp = 0.0;
  std::int64_t runs = 0;
  std::int64_t kept = 0;
  std::int64_t rejected = 0;
};

class CellRunner {
 public:
  CellRunner(const ExperimentPlan& plan, const HarnessOptions& opts, std::ofstream* runs_out)
      : plan_(plan), opts_(opts), runs_out_(runs_out) {}

  // Repetition protocol for one (workers, problem_size) pair.
  Measured measure(std::int64_t workers, std::int64_t problem_size) {
    const WorkloadSpec spec = instantiate(plan_.workload, problem_size, plan_.seed);
    const PointMatrix* data = dataset_for(spec, problem_size);
    auto run_once = [&] {
      return execute(spec, problem_size, plan_.seed, workers, data, opts_.run);
    };
    if (plan_.warmup) (void)run_once();

    std::vector<RunRecord> runs;
    std::vector<double> walls;
    auto add_run = [&] {
      RunRecord r = run_once();
      if (runs_out_ != nullptr) *runs_out_ << nlohmann::json(r).dump() << '\n';
      walls.push_back(r.wall_clock);
      runs.push_back(std::move(r));
    };
    for (std::int64_t i = 0; i < plan_.repetitions; ++i) add_run();

    OutlierDecision d = filter_outliers(walls, plan_.outlier_side);
    if (plan_.rerun_outliers) {
      for (int extra = 0; extra < kMaxOutlierReruns && static_cast<std::int64_t>(d.kept.size()) < plan_.repetitions;
           ++extra) {
        add_run();
        d = filter_outliers(walls, plan_.outlier_side);
      }
    }
    if (runs_out_ != nullptr) runs_out_->flush();
    if (d.kept.empty()) throw Error("every repetition rejected");

    // Runs are kept or dropped whole: wall and compute time together.
    std::vector<double> kept_walls;
    std::vector<double> kept_comps;
    for (auto i : d.kept_indices) {
      kept_walls.push_back(runs[i].wall_clock);
      kept_comps.push_back(aggregate(runs[i]).total_comp());
    }
    Measured m;
    m.mean_wall = mean_of(kept_walls);
    m.mean_comp = mean_of(kept_comps);
    m.runs = static_cast<std::int64_t>(runs.size());
    m.kept = static_cast<std::int64_t>(d.kept.size());
    m.rejected = static_cast<std::int64_t>(d.rejected.size());
    return m;
  }

 private:
  const PointMatrix* dataset_for(const WorkloadSpec& spec, std::int64_t problem_size) {
    const auto* km = std::get_if<KMeansSpec>(&spec);
    if (km == nullptr) return nullptr;
    if (!dataset_ || dataset_size_ != problem_size) {
      dataset_ = generate_dataset(*km);
      dataset_size_ = problem_size;
    }
    return &*dataset_;
  }

  const ExperimentPlan& plan_;
  const HarnessOptions& opts_;
  std::ofstream* runs_out_;
  std::optional<PointMatrix> dataset_;
  std::int64_t dataset_size_ = 0;
};

inline std::set<std::string> cell_flags(const CellResult& c, std::int64_t target_reps) {
  std::set<std::string> flags;
  if (c.metrics.clamped_overhead) flags.insert("clamped_overhead");
  if (c.actual_speedup && *c.actual_speedup > static_cast<double>(c.cell_key.workers)) {
    flags.insert("superlinear");
  }
  if (c.kept < target_reps) flags.insert("incomplete_samples");
  return flags;
}

inline ResultSet execute_plan(const ExperimentPlan& plan, const std::filesystem::path& out_path,
                              ResultSet rs, bool append, const HarnessOptions& opts) {
  const auto cells = plan_cells(plan);
  const std::string wid = workload_id(plan.workload);
  if (rs.cells.size() > cells.size()) throw Error("results file has more cells than the plan");
  for (std::size_t i = 0; i < rs.cells.size(); ++i) {
    const auto& k = rs.cells[i].cell_key;
    if (k.workload_id != wid || k.workers != cells[i].workers ||
        k.problem_size != cells[i].problem_size) {
      throw Error("plan mismatch: completed cell " + std::to_string(i) + " does not match the plan");
    }
  }

  const unsigned hw = std::thread::hardware_concurrency();
  if (opts.log != nullptr && hw != 0 && static_cast<unsigned long long>(plan.worker_counts.back()) > hw) {
    *opts.log << "warning: plan uses up to " << plan.worker_counts.back() << " workers but host reports "
              << hw << " logical processors; timings will be oversubscribed\n";
  }

  std::ofstream out(out_path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw Error("cannot open results file " + out_path.string());
  if (!append) {
    out << header_line(rs) << '\n';
    out.flush();
  }
  std::ofstream runs_out;
  if (opts.write_runs) {
    runs_out.open(out_path.string() + ".runs.jsonl", append ? std::ios::app : std::ios::trunc);
  }

  // T(1) per problem size, reused across cells and across resumes.
  std::map<std::int64_t, Seconds> baselines;
  for (const auto& c : rs.cells) {
    if (c.baseline_wall) baselines[c.cell_key.problem_size] = *c.baseline_wall;
  }

  CellRunner runner(plan, opts, opts.write_runs ? &runs_out : nullptr);
  std::size_t executed = 0;
  for (std::size_t i = rs.cells.size(); i < cells.size(); ++i) {
    if (opts.max_new_cells && executed >= *opts.max_new_cells) break;
    const Cell cell = cells[i];
    CellResult res;
    res.cell_key = {wid, cell.workers, cell.problem_size};
    res.seed = plan.seed;
    try {
      const Measured m = runner.measure(cell.workers, cell.problem_size);
      res.mean_wall = m.mean_wall;
      res.mean_total_comp = m.mean_comp;
      res.runs = m.runs;
      res.kept = m.kept;
      res.rejected = m.rejected;
      res.metrics = granularity_metrics(TimingBreakdown(cell.workers, m.mean_wall, m.mean_comp));

      if (plan.measure_serial_baseline) {
        if (cell.workers == 1) baselines[cell.problem_size] = m.mean_wall;
        auto it = baselines.find(cell.problem_size);
        if (it == baselines.end()) {
          it = baselines.emplace(cell.problem_size, runner.measure(1, cell.problem_size).mean_wall).first;
        }
        res.baseline_wall = it->second;
        res.actual_speedup = it->second / m.mean_wall;
        res.relative_error = relative_error(*res.actual_speedup, res.metrics.estimated_speedup);
      }
    } catch (const std::exception& e) {
      throw CellFailure(res.cell_key, e.what());
    }
    res.flags = cell_flags(res, plan.repetitions);
    res.completed_at = detail::utc_now_iso8601();
    out << cell_line(res) << '\n';
    out.flush();
    if (opts.log != nullptr) {
      *opts.log << "cell p=" << cell.workers << " W=" << cell.problem_size << " wall=" << res.mean_wall
                << "s E=" << res.metrics.efficiency << " S_est=" << res.metrics.estimated_speedup;
      if (res.actual_speedup) *opts.log << " S=" << *res.actual_speedup;
      *opts.log << '\n';
    }
    rs.cells.push_back(std::move(res));
    ++executed;
  }
  return rs;
}

}  // namespace detail

/// Runs every cell of `plan`, writing a fresh results file at `out_path`.
inline ResultSet run_plan(const ExperimentPlan& plan, const std::filesystem::path& out_path,
                          const HarnessOptions& opts = {}) {
  plan.validate();
  ResultSet rs;
  rs.plan = plan;
  rs.plan_hash = plan_hash(plan);
  return detail::execute_plan(plan, out_path, std::move(rs), false, opts);
}

/// Continues a partially written results file. Completed cells are kept as
/// they are; only the missing ones run.
inline ResultSet resume(const ExperimentPlan& plan, const std::filesystem::path& results_path,
                        const HarnessOptions& opts = {}) {
  plan.validate();
  ResultSet rs = load_results(results_path);
  if (rs.plan_hash != plan_hash(plan)) {
    throw Error("plan mismatch: results file was produced by plan " + rs.plan_hash + ", current plan is " +
                plan_hash(plan));
  }
  return detail::execute_plan(plan, results_path, std::move(rs), true, opts);
}

}  // namespace granscale
