// Performance and RRM measurements: user perceived throughput, VoIP outage,
// L1 RSSI aggregation and channel occupancy.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "coexist/medium.hpp"
#include "coexist/sim_core.hpp"

namespace coexist::metrics {

struct FileRecord {
  std::int64_t bytes = 0;
  SimTime arrival;
  SimTime first_service;
  SimTime completion;

  SimTime active_time() const { return completion - first_service; }
};

/// 8 * bytes / active time; pre-service waiting is not counted.
inline double upt_bps(const FileRecord& r) {
  if (r.bytes <= 0) throw std::invalid_argument("upt_bps: file has no bytes");
  if (!(r.arrival <= r.first_service && r.first_service < r.completion))
    throw std::invalid_argument("upt_bps: need arrival <= first_service < completion");
  return 8.0 * static_cast<double>(r.bytes) / r.active_time().seconds();
}

/// Linear-interpolation percentile (p in [0,1]) of sorted data.
inline double percentile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("percentile: empty input");
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct UptSummary {
  double mean = 0;
  double p5 = 0;
  double p50 = 0;
  double p95 = 0;
  std::size_t count = 0;
};

inline UptSummary summarize(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("upt_summary: no completed files");
  std::sort(values.begin(), values.end());
  UptSummary s;
  s.count = values.size();
  double sum = 0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  s.p5 = percentile_sorted(values, 0.05);
  s.p50 = percentile_sorted(values, 0.50);
  s.p95 = percentile_sorted(values, 0.95);
  return s;
}

inline UptSummary upt_summary(std::span<const FileRecord> records) {
  std::vector<double> v;
  v.reserve(records.size());
  for (const auto& r : records) v.push_back(upt_bps(r));
  return summarize(std::move(v));
}

inline constexpr int kL1SamplesPerMs = 14;

/// Linear-domain (mW) mean of consecutive windows of L1 samples, in dBm.
/// A trailing partial window is discarded.
inline std::vector<double> rssi_report(std::span<const double> l1_samples_dbm, int agg_duration_ms) {
  if (agg_duration_ms < 1 || agg_duration_ms > 5)
    throw std::invalid_argument("rssi_report: aggregation must be 1..5 ms");
  const std::size_t window = static_cast<std::size_t>(agg_duration_ms * kL1SamplesPerMs);
  std::vector<double> out;
  for (std::size_t i = 0; i + window <= l1_samples_dbm.size(); i += window) {
    double sum = 0;
    for (std::size_t k = i; k < i + window; ++k) sum += dbm_to_mw(l1_samples_dbm[k]);
    out.push_back(mw_to_dbm(sum / static_cast<double>(window)));
  }
  return out;
}

/// Percentage of L1 samples strictly above the threshold.
inline double channel_occupancy(std::span<const double> l1_samples_dbm, double threshold_dbm) {
  if (l1_samples_dbm.empty()) throw std::invalid_argument("channel_occupancy: no samples");
  const auto busy = std::count_if(l1_samples_dbm.begin(), l1_samples_dbm.end(),
                                  [threshold_dbm](double s) { return s > threshold_dbm; });
  return 100.0 * static_cast<double>(busy) / static_cast<double>(l1_samples_dbm.size());
}

inline constexpr double kDroppedDelay = std::numeric_limits<double>::infinity();

struct VoipOutageRule {
  double delay_budget_ms = 50.0;
  double max_late_fraction = 0.02;
};

/// Fraction of users in outage. A user is in outage when more than 2 % of its
/// packets exceed the delay budget; dropped packets carry infinite delay.
/// Users without packets are not counted.
inline double voip_outage(const std::vector<std::vector<double>>& per_user_delays_ms, VoipOutageRule rule = {}) {
  if (per_user_delays_ms.empty()) throw std::invalid_argument("voip_outage: no VoIP users");
  int users = 0;
  int outage = 0;
  for (const auto& user : per_user_delays_ms) {
    if (user.empty()) continue;
    ++users;
    const auto late = std::count_if(user.begin(), user.end(), [&](double d) { return d > rule.delay_budget_ms; });
    if (static_cast<double>(late) > rule.max_late_fraction * static_cast<double>(user.size())) ++outage;
  }
  if (users == 0) throw std::invalid_argument("voip_outage: no VoIP packets");
  return static_cast<double>(outage) / static_cast<double>(users);
}

}  // namespace coexist::metrics
