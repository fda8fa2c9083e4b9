// Two-step coexistence runs: paired replications of Wi-Fi/Wi-Fi and
// Wi-Fi/LAA, load calibration and result files.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "coexist/config.hpp"
#include "coexist/metrics.hpp"
#include "coexist/network.hpp"
#include "coexist/traffic.hpp"

namespace coexist::harness {

/// Seed of replication `rep`. Both steps of a replication use it, which
/// pairs their topology, shadowing and traffic.
inline std::uint64_t replication_seed(std::uint64_t master, int rep) {
  return detail::splitmix64(master ^ detail::splitmix64(0x5265706cULL + static_cast<std::uint64_t>(rep)));
}

/// Calibration draws from its own seed family so it never reuses run seeds.
inline std::uint64_t calibration_seed(std::uint64_t master, int rep) {
  return detail::splitmix64(detail::splitmix64(master ^ 0x43616c6962ULL) + static_cast<std::uint64_t>(rep));
}

struct ResultRow {
  int replication = 0;
  int step = 1;
  int operator_id = 1;
  Technology technology = Technology::WiFi;
  std::string load_class;
  double mean_occupancy = 0;
  std::optional<metrics::UptSummary> upt;  // bps; empty when no file completed
  double voip_outage = std::nan("");
  double channel_occupancy_pct = std::nan("");
  std::int64_t files_completed = 0;
  std::int64_t files_dropped = 0;
};

struct ReplicationRun {
  int replication = 0;
  int step = 1;
  std::uint64_t seed = 0;
  std::uint64_t event_digest = 0;
  std::uint64_t events = 0;
};

struct RunRequest {
  std::optional<traffic::LoadClass> load;  // empty: use traffic.dl_arrival_rate_per_s
  std::vector<int> steps{1, 2};
  int replications = 0;                    // 0: take run.replications
  std::optional<std::uint64_t> master_seed;
  std::optional<std::filesystem::path> trace_dir;
  std::size_t trace_lines = 2000;
};

struct RunReport {
  ScenarioConfig config;
  std::string load_label;
  double lambda_per_s = 0;
  std::uint64_t master_seed = 0;
  int replications = 0;
  std::vector<int> steps;
  std::vector<ResultRow> rows;
  std::vector<ReplicationRun> runs;

  const ResultRow* find(int rep, int step, int op) const {
    for (const auto& r : rows)
      if (r.replication == rep && r.step == step && r.operator_id == op) return &r;
    return nullptr;
  }
};

inline ResultRow make_row(const OperatorOutcome& o, int rep, int step, const std::string& label,
                          const ScenarioConfig& cfg) {
  ResultRow r;
  r.replication = rep;
  r.step = step;
  r.operator_id = o.operator_id;
  r.technology = o.technology;
  r.load_class = label;
  r.mean_occupancy = o.mean_occupancy;
  if (!o.files.empty()) r.upt = metrics::upt_summary(o.files);
  const bool any_voip = std::any_of(o.voip_delays_ms.begin(), o.voip_delays_ms.end(),
                                    [](const auto& u) { return !u.empty(); });
  if (any_voip) {
    metrics::VoipOutageRule rule{static_cast<double>(cfg.traffic.voip.delay_budget_ms),
                                 cfg.metrics.voip_max_late_fraction};
    r.voip_outage = metrics::voip_outage(o.voip_delays_ms, rule);
  }
  r.channel_occupancy_pct = o.channel_occupancy_pct;
  r.files_completed = static_cast<std::int64_t>(o.files.size());
  r.files_dropped = o.files_dropped;
  return r;
}

/// Mean step-1 operator-1 infrastructure buffer occupancy at arrival rate `lambda`.
inline double step1_occupancy(const ScenarioConfig& cfg, double lambda, int replications, double duration_s,
                              std::uint64_t master) {
  double sum = 0;
  for (int rep = 0; rep < replications; ++rep) {
    SimOptions opt;
    opt.step = 1;
    opt.dl_lambda_per_s = lambda;
    opt.duration = SimTime::from_s(duration_s);
    Simulation sim(cfg, calibration_seed(master, rep), opt);
    sim.run();
    sum += sim.outcomes()[0].mean_occupancy;
  }
  return sum / replications;
}

struct CalibrationResult {
  traffic::LoadClass target = traffic::LoadClass::Low;
  double lambda_per_s = 0;
  double occupancy = 0;
  int evaluations = 0;
};

/// Bisection on the per-client FTP arrival rate until the step-1 operator-1
/// occupancy (averaged over the calibration replications) lands in the
/// target band. Occupancy grows with the rate, so the search aims at the
/// band midpoint and stops once inside the central half of the band; fresh
/// seeds then still land in the band. If the iteration budget runs out the
/// best in-band rate found is returned.
inline CalibrationResult calibrate_load(traffic::LoadClass target, const ScenarioConfig& cfg) {
  if (target == traffic::LoadClass::OutOfBand) throw std::invalid_argument("calibrate_load: target must be a load band");
  cfg.validate();
  const auto band = traffic::band_of(target);
  const double mid = 0.5 * (band.lo + band.hi);
  const int reps = cfg.run.calibration_replications;
  const double dur = cfg.run.calibration_duration_s;
  const std::uint64_t master = cfg.run.master_seed;
  CalibrationResult res;
  res.target = target;
  auto eval = [&](double lambda) {
    ++res.evaluations;
    return step1_occupancy(cfg, lambda, reps, dur, master);
  };
  auto in_band = [&](double occ) { return occ >= band.lo && occ <= band.hi; };
  const double tol = 0.25 * (band.hi - band.lo);
  auto centred = [&](double occ) { return std::abs(occ - mid) <= tol; };
  std::optional<std::pair<double, double>> best;  // (lambda, occupancy) closest to mid
  auto note = [&](double lambda, double occ) {
    if (in_band(occ) && (!best || std::abs(occ - mid) < std::abs(best->second - mid))) best = {lambda, occ};
  };
  auto fail = [&](double l0, double o0, double l1, double o1) {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "calibrate_load: %s band [%.2f, %.2f] unreachable; occupancy %.4f at lambda %.6g/s, %.4f at %.6g/s",
                  traffic::to_string(target), band.lo, band.hi, o0, l0, o1, l1);
    throw std::runtime_error(buf);
  };

  constexpr double kLambdaMin = 1e-3;
  constexpr double kLambdaMax = 256.0;
  double lo = kLambdaMin;
  double occ_lo = eval(lo);
  note(lo, occ_lo);
  if (occ_lo > band.hi) fail(lo, occ_lo, lo, occ_lo);
  if (centred(occ_lo) || occ_lo > mid) return {target, lo, occ_lo, res.evaluations};

  double hi = std::max(cfg.traffic.dl_arrival_rate_per_s, 0.25);
  double occ_hi = eval(hi);
  note(hi, occ_hi);
  while (occ_hi < mid && !centred(occ_hi)) {
    lo = hi;
    occ_lo = occ_hi;
    if (hi >= kLambdaMax) {
      if (best) return {target, best->first, best->second, res.evaluations};
      fail(kLambdaMin, eval(kLambdaMin), hi, occ_hi);
    }
    hi = std::min(hi * 2.0, kLambdaMax);
    occ_hi = eval(hi);
    note(hi, occ_hi);
  }
  if (centred(occ_hi)) return {target, hi, occ_hi, res.evaluations};

  for (int it = 0; it < 24; ++it) {
    const double m = 0.5 * (lo + hi);
    const double occ = eval(m);
    note(m, occ);
    if (centred(occ)) return {target, m, occ, res.evaluations};
    if (occ < mid) {
      lo = m;
      occ_lo = occ;
    } else {
      hi = m;
      occ_hi = occ;
    }
    if (hi - lo < 1e-6 * hi) break;
  }
  if (best) return {target, best->first, best->second, res.evaluations};
  fail(lo, occ_lo, hi, occ_hi);
  return res;  // unreachable
}

/// Arrival rate for a requested class: a pre-calibrated value from the
/// configuration if present, otherwise a fresh calibration.
inline double lambda_for(traffic::LoadClass c, const ScenarioConfig& cfg) {
  const auto it = cfg.traffic.load_lambda_per_s.find(traffic::to_string(c));
  if (it != cfg.traffic.load_lambda_per_s.end()) return it->second;
  return calibrate_load(c, cfg).lambda_per_s;
}

/// Runs every requested step of every replication.
inline RunReport run_two_step(const ScenarioConfig& cfg, const RunRequest& req) {
  cfg.validate();
  for (int s : req.steps)
    if (s != 1 && s != 2) throw std::invalid_argument("steps must be 1 and/or 2");
  RunReport rep;
  rep.config = cfg;
  rep.master_seed = req.master_seed.value_or(cfg.run.master_seed);
  rep.config.run.master_seed = rep.master_seed;
  rep.replications = req.replications > 0 ? req.replications : cfg.run.replications;
  rep.steps = req.steps;
  std::sort(rep.steps.begin(), rep.steps.end());
  rep.steps.erase(std::unique(rep.steps.begin(), rep.steps.end()), rep.steps.end());
  if (req.load) {
    rep.lambda_per_s = lambda_for(*req.load, rep.config);
    rep.load_label = traffic::to_string(*req.load);
  } else {
    rep.lambda_per_s = cfg.traffic.dl_arrival_rate_per_s;
    rep.load_label = "unspecified";
  }
  if (req.trace_dir) std::filesystem::create_directories(*req.trace_dir);

  for (int r = 0; r < rep.replications; ++r) {
    const std::uint64_t seed = replication_seed(rep.master_seed, r);
    for (int step : rep.steps) {
      SimOptions opt;
      opt.step = step;
      opt.dl_lambda_per_s = rep.lambda_per_s;
      opt.duration = SimTime::from_s(cfg.run.duration_s);
      std::ostringstream log;
      if (req.trace_dir) {
        opt.event_log = &log;
        opt.event_log_limit = req.trace_lines;
      }
      Simulation sim(rep.config, seed, opt);
      sim.run();
      for (const auto& o : sim.outcomes()) rep.rows.push_back(make_row(o, r, step, rep.load_label, rep.config));
      rep.runs.push_back({r, step, seed, sim.event_digest(), sim.events_dispatched()});
      if (req.trace_dir) {
        char name[64];
        std::snprintf(name, sizeof name, "events_rep%03d_step%d.log", r, step);
        std::ofstream f(*req.trace_dir / name, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write trace file in " + req.trace_dir->string());
        f << log.str();
        char tail[96];
        std::snprintf(tail, sizeof tail, "# events %llu digest %016llx\n",
                      static_cast<unsigned long long>(sim.events_dispatched()),
                      static_cast<unsigned long long>(sim.event_digest()));
        f << tail;
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Output

inline const char* kCsvHeader =
    "replication,step,operator,technology,load_class,mean_occupancy,upt_mean_mbps,upt_p5_mbps,upt_p50_mbps,"
    "upt_p95_mbps,voip_outage,channel_occupancy_pct,files_completed,files_dropped";

inline std::string fmt_num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string results_csv(const RunReport& rep) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : rep.rows) {
    const double nan = std::nan("");
    auto mbps = [&](double metrics::UptSummary::*f) { return r.upt ? (*r.upt).*f / 1e6 : nan; };
    out += std::to_string(r.replication) + "," + std::to_string(r.step) + "," + std::to_string(r.operator_id) + "," +
           to_string(r.technology) + "," + r.load_class + "," + fmt_num(r.mean_occupancy) + "," +
           fmt_num(mbps(&metrics::UptSummary::mean)) + "," + fmt_num(mbps(&metrics::UptSummary::p5)) + "," +
           fmt_num(mbps(&metrics::UptSummary::p50)) + "," + fmt_num(mbps(&metrics::UptSummary::p95)) + "," +
           fmt_num(r.voip_outage) + "," + fmt_num(r.channel_occupancy_pct) + "," + std::to_string(r.files_completed) +
           "," + std::to_string(r.files_dropped) + "\n";
  }
  return out;
}

/// Per-replication step2/step1 UPT ratio of the non-replaced operator.
inline std::vector<double> op1_upt_ratios(const RunReport& rep) {
  std::vector<double> v;
  for (int r = 0; r < rep.replications; ++r) {
    const ResultRow* a = rep.find(r, 1, 1);
    const ResultRow* b = rep.find(r, 2, 1);
    if (a && b && a->upt && b->upt && a->upt->mean > 0) v.push_back(b->upt->mean / a->upt->mean);
  }
  return v;
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nan("");
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline nlohmann::json json_num(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }

inline nlohmann::json summary_json(const RunReport& rep) {
  using nlohmann::json;
  json s;
  s["config"] = config_to_json(rep.config);
  s["load_class"] = rep.load_label;
  s["lambda_per_s"] = rep.lambda_per_s;
  s["master_seed"] = rep.master_seed;
  s["replications"] = rep.replications;
  s["steps"] = rep.steps;
  json seeds = json::array();
  for (int r = 0; r < rep.replications; ++r) seeds.push_back(replication_seed(rep.master_seed, r));
  s["replication_seeds"] = seeds;

  json per_step = json::object();
  for (int step : rep.steps) {
    for (int op = 1; op <= 2; ++op) {
      std::vector<double> upt, occ, outage;
      for (const auto& r : rep.rows) {
        if (r.step != step || r.operator_id != op) continue;
        if (r.upt) upt.push_back(r.upt->mean / 1e6);
        occ.push_back(r.mean_occupancy);
        if (!std::isnan(r.voip_outage)) outage.push_back(r.voip_outage);
      }
      json e;
      e["upt_mean_mbps"] = json_num(mean_of(upt));
      e["mean_occupancy"] = json_num(mean_of(occ));
      e["voip_outage"] = json_num(mean_of(outage));
      per_step["step" + std::to_string(step)]["op" + std::to_string(op)] = e;
    }
  }
  s["aggregates"] = per_step;

  std::vector<double> occ1;
  for (const auto& r : rep.rows)
    if (r.step == 1 && r.operator_id == 1) occ1.push_back(r.mean_occupancy);
  if (!occ1.empty()) {
    const double m = mean_of(occ1);
    s["achieved_step1_occupancy"] = m;
    s["achieved_load_class"] = traffic::to_string(traffic::classify_load(m));
  }

  if (std::find(rep.steps.begin(), rep.steps.end(), 1) != rep.steps.end() &&
      std::find(rep.steps.begin(), rep.steps.end(), 2) != rep.steps.end()) {
    const double u1 = per_step["step1"]["op1"]["upt_mean_mbps"].is_null()
                          ? std::nan("")
                          : per_step["step1"]["op1"]["upt_mean_mbps"].get<double>();
    const double u2 = per_step["step2"]["op1"]["upt_mean_mbps"].is_null()
                          ? std::nan("")
                          : per_step["step2"]["op1"]["upt_mean_mbps"].get<double>();
    auto ratios = op1_upt_ratios(rep);
    std::vector<double> sorted = ratios;
    std::sort(sorted.begin(), sorted.end());
    json d;
    d["step1_upt_mean_mbps"] = json_num(u1);
    d["step2_upt_mean_mbps"] = json_num(u2);
    d["upt_delta"] = json_num((u2 - u1) / u1);
    d["ratio_median"] = sorted.empty() ? json(nullptr) : json(metrics::percentile_sorted(sorted, 0.5));
    d["ratios"] = ratios;
    s["op1_upt_delta"][rep.load_label] = d;
  }
  return s;
}

/// Writes results.csv and summary.json into `out_dir` (created if needed).
inline void emit_results(const RunReport& rep, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + out_dir.string() + ": " + ec.message());
  {
    std::ofstream f(out_dir / "results.csv", std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (out_dir / "results.csv").string());
    f << results_csv(rep);
  }
  {
    std::ofstream f(out_dir / "summary.json", std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (out_dir / "summary.json").string());
    f << summary_json(rep).dump(2) << "\n";
  }
}

}  // namespace coexist::harness
