// coexist-sim: two-step LAA/Wi-Fi coexistence runs from a JSON scenario.
#include <cstdint>
#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "coexist/config.hpp"
#include "coexist/harness.hpp"
#include "coexist/traffic.hpp"

namespace {

using namespace coexist;

std::vector<int> parse_steps(const std::string& s) {
  if (s == "1") return {1};
  if (s == "2") return {2};
  if (s == "both") return {1, 2};
  throw std::invalid_argument("--step must be 1, 2 or both");
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed, int replications,
            const std::string& load, const std::string& step, const std::string& out, bool trace) {
  auto cfg = load_config(config_path);
  harness::RunRequest req;
  if (!load.empty()) req.load = traffic::parse_load_class(load);
  req.steps = parse_steps(step);
  req.replications = replications;
  req.master_seed = seed;
  if (trace) req.trace_dir = std::filesystem::path(out) / "trace";
  const auto report = harness::run_two_step(cfg, req);
  harness::emit_results(report, out);

  const auto ratios = harness::op1_upt_ratios(report);
  std::printf("load %s lambda %.6g/s replications %d rows %zu\n", report.load_label.c_str(), report.lambda_per_s,
              report.replications, report.rows.size());
  if (!ratios.empty()) {
    auto sorted = ratios;
    std::sort(sorted.begin(), sorted.end());
    std::printf("op1 UPT step2/step1 median %.4f\n", metrics::percentile_sorted(sorted, 0.5));
  }
  std::printf("wrote %s\n", (std::filesystem::path(out) / "results.csv").string().c_str());
  return 0;
}

int cmd_validate(const std::string& config_path) {
  const auto cfg = load_config(config_path);
  cfg.validate();
  std::printf("%s: ok (schema_version %d)\n", config_path.c_str(), cfg.schema_version);
  return 0;
}

int cmd_calibrate(const std::string& config_path, const std::string& load) {
  const auto cfg = load_config(config_path);
  const auto r = harness::calibrate_load(traffic::parse_load_class(load), cfg);
  std::printf("%s lambda_per_s %.6g occupancy %.4f evaluations %d\n", traffic::to_string(r.target), r.lambda_per_s,
              r.occupancy, r.evaluations);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LAA / Wi-Fi coexistence simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  int replications = 0;
  std::string load;
  std::string step = "both";
  std::string out = "out";
  bool trace = false;

  auto* run = app.add_subcommand("run", "run paired step-1/step-2 replications");
  run->add_option("--config", config_path, "scenario JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "master seed (default: run.master_seed)");
  run->add_option("--replications", replications, "replications (default: run.replications)")
      ->check(CLI::PositiveNumber);
  run->add_option("--load", load, "load class")->check(CLI::IsMember({"low", "medium", "high"}));
  run->add_option("--step", step, "steps to run")->check(CLI::IsMember({"1", "2", "both"}));
  run->add_option("--out", out, "output directory");
  run->add_flag("--trace", trace, "write per-replication event logs");

  auto* validate = app.add_subcommand("validate", "check a scenario file");
  validate->add_option("--config", config_path, "scenario JSON")->required()->check(CLI::ExistingFile);

  auto* calibrate = app.add_subcommand("calibrate", "find the arrival rate for a load class");
  calibrate->add_option("--config", config_path, "scenario JSON")->required()->check(CLI::ExistingFile);
  calibrate->add_option("--load", load, "load class")->required()->check(CLI::IsMember({"low", "medium", "high"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, seed, replications, load, step, out, trace);
    if (*validate) return cmd_validate(config_path);
    if (*calibrate) return cmd_calibrate(config_path, load);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
