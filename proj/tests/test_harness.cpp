#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "coexist/harness.hpp"

using namespace coexist;
using namespace coexist::harness;

namespace {

ScenarioConfig quick() {
  ScenarioConfig c;
  c.run.duration_s = 1.0;
  c.run.replications = 3;
  c.run.calibration_replications = 2;
  c.run.calibration_duration_s = 1.0;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("coexist_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(Harness, ReplicationSeedsDistinctAndStable) {
  EXPECT_EQ(replication_seed(1, 0), replication_seed(1, 0));
  EXPECT_NE(replication_seed(1, 0), replication_seed(1, 1));
  EXPECT_NE(replication_seed(1, 0), replication_seed(2, 0));
  EXPECT_NE(replication_seed(1, 0), calibration_seed(1, 0));
}

TEST(Harness, OneRowPerReplicationStepOperator) {
  RunRequest req;
  req.replications = 3;
  const auto rep = run_two_step(quick(), req);
  EXPECT_EQ(rep.rows.size(), 3u * 2u * 2u);
  for (int r = 0; r < 3; ++r)
    for (int step : {1, 2})
      for (int op : {1, 2}) ASSERT_NE(rep.find(r, step, op), nullptr);
  EXPECT_EQ(rep.find(0, 2, 2)->technology, Technology::LAA);
  EXPECT_EQ(rep.find(0, 1, 2)->technology, Technology::WiFi);
  EXPECT_EQ(rep.runs.size(), 6u);
}

TEST(Harness, SingleStepAndValidation) {
  RunRequest req;
  req.replications = 2;
  req.steps = {2};
  const auto rep = run_two_step(quick(), req);
  EXPECT_EQ(rep.rows.size(), 4u);
  req.steps = {3};
  EXPECT_THROW(run_two_step(quick(), req), std::invalid_argument);
}

TEST(Harness, CsvSchemaAndDeterminism) {
  RunRequest req;
  req.replications = 2;
  req.master_seed = 2024;
  const auto a = scratch("a"), b = scratch("b");
  emit_results(run_two_step(quick(), req), a);
  emit_results(run_two_step(quick(), req), b);
  const auto csv = slurp(a / "results.csv");
  EXPECT_EQ(csv, slurp(b / "results.csv"));
  EXPECT_EQ(slurp(a / "summary.json"), slurp(b / "summary.json"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "replication,step,operator,technology,load_class,mean_occupancy,upt_mean_mbps,upt_p5_mbps,upt_p50_mbps,"
            "upt_p95_mbps,voip_outage,channel_occupancy_pct,files_completed,files_dropped");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 8);
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}

TEST(Harness, SummaryCarriesUptDelta) {
  auto cfg = quick();
  cfg.traffic.load_lambda_per_s["low"] = 0.75;
  RunRequest req;
  req.replications = 2;
  req.load = traffic::LoadClass::Low;
  const auto rep = run_two_step(cfg, req);
  EXPECT_DOUBLE_EQ(rep.lambda_per_s, 0.75);
  const auto s = summary_json(rep);
  ASSERT_TRUE(s.contains("op1_upt_delta"));
  const auto& d = s["op1_upt_delta"]["low"];
  const double u1 = d["step1_upt_mean_mbps"].get<double>();
  const double u2 = d["step2_upt_mean_mbps"].get<double>();
  EXPECT_NEAR(d["upt_delta"].get<double>(), (u2 - u1) / u1, 1e-12);
  EXPECT_EQ(d["ratios"].size(), 2u);
  EXPECT_EQ(s["replication_seeds"].size(), 2u);
  EXPECT_EQ(s["config"]["schema_version"], 1);
}

TEST(Harness, TraceFilesWritten) {
  RunRequest req;
  req.replications = 1;
  const auto dir = scratch("trace");
  req.trace_dir = dir;
  req.trace_lines = 50;
  run_two_step(quick(), req);
  const auto log = slurp(dir / "events_rep000_step1.log");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 51);
  EXPECT_TRUE(std::filesystem::exists(dir / "events_rep000_step2.log"));
  std::filesystem::remove_all(dir);
}

TEST(Harness, UnwritableDirectory) {
  RunRequest req;
  req.replications = 1;
  req.steps = {1};
  const auto rep = run_two_step(quick(), req);
  const auto file = scratch("file");
  std::ofstream(file) << "x";
  EXPECT_THROW(emit_results(rep, file / "sub"), std::runtime_error);
  std::filesystem::remove(file);
}

TEST(Calibration, LowBandReached) {
  auto cfg = quick();
  cfg.run.calibration_replications = 3;
  cfg.run.calibration_duration_s = 4.0;
  const auto r = calibrate_load(traffic::LoadClass::Low, cfg);
  EXPECT_GE(r.occupancy, 0.15);
  EXPECT_LE(r.occupancy, 0.30);
  EXPECT_GT(r.lambda_per_s, 0.0);
  // a pre-calibrated value short-circuits the search
  cfg.traffic.load_lambda_per_s["low"] = 0.5;
  EXPECT_DOUBLE_EQ(lambda_for(traffic::LoadClass::Low, cfg), 0.5);
}

TEST(Calibration, SaturatedChannelCannotReachLow) {
  auto cfg = quick();
  cfg.traffic.voip_enabled = true;
  cfg.traffic.voip_users_per_operator = 10;
  cfg.traffic.voip.packet_interval_ms = 1;
  cfg.traffic.voip.payload_bytes = 1500;
  try {
    calibrate_load(traffic::LoadClass::Low, cfg);
    FAIL() << "expected calibration failure";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("unreachable"), std::string::npos);
  }
  EXPECT_THROW(calibrate_load(traffic::LoadClass::OutOfBand, cfg), std::invalid_argument);
}
