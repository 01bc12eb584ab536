// SPDX-License-Identifier: Apache-2.0
//
// granscale run --plan plan.json --out results.jsonl [--resume] [--pin-cores]
// granscale report --in results.jsonl --format csv|table|json [--out path]
// granscale validate-fixture

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "granscale/harness.hpp"
#include "granscale/report.hpp"
#include "granscale/version.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitPartial = 2;

int cmd_run(const std::string& plan_path, const std::string& out_path, bool resume, bool pin) {
  granscale::ExperimentPlan plan = granscale::load_plan(plan_path);
  granscale::apply_env_overrides(plan);
  granscale::HarnessOptions opts;
  opts.run.pin_cores = pin;
  opts.log = &std::cerr;
  try {
    if (resume && std::filesystem::exists(out_path)) {
      granscale::resume(plan, out_path, opts);
    } else {
      granscale::run_plan(plan, out_path, opts);
    }
  } catch (const granscale::CellFailure& e) {
    std::cerr << "granscale: " << e.what() << "\n";
    return kExitPartial;
  }
  return kExitOk;
}

std::string render_report(const granscale::ResultSet& rs, const std::string& format) {
  using granscale::ScalingMode;
  using granscale::TableFormat;
  if (format == "json") return granscale::rows_json(rs).dump(2) + "\n";
  if (rs.plan.mode == ScalingMode::Strong) {
    if (format == "csv") return granscale::strong_scaling_csv(rs);
    return granscale::rows_table(rs) + "\n" + granscale::scalability_verdict(rs).text;
  }
  const auto fmt = format == "csv" ? TableFormat::Csv : TableFormat::Text;
  const auto tables = granscale::weak_scaling_tables(rs, fmt);
  std::string out = tables.time_table + "\n" + tables.speedup_table;
  if (format == "table") out += "\n" + granscale::scalability_verdict(rs).text;
  return out;
}

int cmd_report(const std::string& in_path, const std::string& format, const std::string& out_path) {
  const auto rs = granscale::load_results(in_path);
  const std::string text = render_report(rs, format);
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
  } else {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw granscale::Error("cannot write " + out_path);
    out << text;
  }
  return kExitOk;
}

int cmd_validate_fixture() {
  const auto v = granscale::validate_fixture();
  std::cout << v.render();
  return v.passed ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speedup and efficiency estimation from single instrumented parallel runs"};
  app.set_version_flag("--version", granscale::kToolVersion);
  app.require_subcommand(1);

  std::string plan_path;
  std::string out_path;
  bool resume = false;
  bool pin = false;
  auto* run = app.add_subcommand("run", "Execute an experiment plan");
  run->add_option("--plan", plan_path, "Plan file (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_path, "Results file (JSON Lines)")->required();
  run->add_flag("--resume", resume, "Continue an existing results file");
  run->add_flag("--pin-cores", pin, "Pin worker w to logical CPU w (Linux)");

  std::string in_path;
  std::string format = "table";
  std::string report_out;
  auto* report = app.add_subcommand("report", "Render a results file");
  report->add_option("--in", in_path, "Results file (JSON Lines)")->required()->check(CLI::ExistingFile);
  report->add_option("--format", format, "csv, table or json")
      ->check(CLI::IsMember({"csv", "table", "json"}));
  report->add_option("--out", report_out, "Output path (default stdout)");

  auto* fixture = app.add_subcommand("validate-fixture", "Check the embedded published tables");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(plan_path, out_path, resume, pin);
    if (*report) return cmd_report(in_path, format, report_out);
    if (*fixture) return cmd_validate_fixture();
  } catch (const std::exception& e) {
    std::cerr << "granscale: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
