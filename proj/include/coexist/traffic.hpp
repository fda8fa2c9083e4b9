// Traffic sources (Poisson FTP files, periodic VoIP), per-node transmit
// buffers with busy-time logging, and load classification.
#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "coexist/sim_core.hpp"

namespace coexist::traffic {

struct FtpFlowConfig {
  double arrival_rate_per_s = 1.0;
  std::int64_t file_size_bytes = 500000;

  void validate() const {
    if (!(arrival_rate_per_s > 0)) throw std::invalid_argument("FTP arrival rate must be positive");
    if (file_size_bytes <= 0) throw std::invalid_argument("FTP file size must be positive");
  }
};

struct VoipFlowConfig {
  std::int64_t packet_interval_ms = 20;
  std::int64_t payload_bytes = 60;
  std::int64_t delay_budget_ms = 50;

  void validate() const {
    if (packet_interval_ms <= 0) throw std::invalid_argument("VoIP packet interval must be positive");
    if (payload_bytes <= 0) throw std::invalid_argument("VoIP payload must be positive");
    if (delay_budget_ms <= 0) throw std::invalid_argument("VoIP delay budget must be positive");
  }
};

/// Poisson arrival instants in [0, t_end).
inline std::vector<SimTime> generate_ftp_arrivals(const FtpFlowConfig& cfg, RngStream& stream, SimTime t_end) {
  cfg.validate();
  std::vector<SimTime> out;
  double t = 0.0;
  const double end_s = t_end.seconds();
  while (true) {
    t += stream.exponential(cfg.arrival_rate_per_s);
    if (t >= end_s) break;
    out.emplace_back(static_cast<std::int64_t>(t * 1e9));
  }
  return out;
}

/// Strictly periodic packet instants starting at `phase`, in [0, t_end).
inline std::vector<SimTime> generate_voip_packets(const VoipFlowConfig& cfg, SimTime phase, SimTime t_end) {
  cfg.validate();
  std::vector<SimTime> out;
  for (SimTime t = phase; t < t_end; t += SimTime::from_ms(cfg.packet_interval_ms)) out.push_back(t);
  return out;
}

/// Disjoint busy intervals of a buffer, opened on empty->non-empty and
/// closed on non-empty->empty.
class BusyLog {
 public:
  void set_busy(bool busy, SimTime t) {
    if (busy == open_.has_value()) return;
    if (busy) {
      open_ = t;
    } else {
      if (t > *open_) intervals_.push_back({*open_, t});
      open_.reset();
    }
  }

  bool busy() const { return open_.has_value(); }

  /// Total busy time within [0, horizon), counting a still-open interval.
  SimTime busy_time(SimTime horizon) const {
    SimTime total{};
    for (const auto& [a, b] : intervals_) total += std::min(b, horizon) - std::min(a, horizon);
    if (open_ && *open_ < horizon) total += horizon - *open_;
    return total;
  }

  const std::vector<std::pair<SimTime, SimTime>>& intervals() const { return intervals_; }

 private:
  std::vector<std::pair<SimTime, SimTime>> intervals_;
  std::optional<SimTime> open_;
};

inline double buffer_occupancy(const BusyLog& log, SimTime horizon) {
  if (horizon.ns <= 0) throw std::invalid_argument("buffer_occupancy: horizon must be positive");
  const double f = static_cast<double>(log.busy_time(horizon).ns) / static_cast<double>(horizon.ns);
  return std::clamp(f, 0.0, 1.0);
}

enum class LoadClass { Low, Medium, High, OutOfBand };

inline const char* to_string(LoadClass c) {
  switch (c) {
    case LoadClass::Low: return "low";
    case LoadClass::Medium: return "medium";
    case LoadClass::High: return "high";
    case LoadClass::OutOfBand: return "out_of_band";
  }
  return "?";
}

inline LoadClass parse_load_class(const std::string& s) {
  if (s == "low") return LoadClass::Low;
  if (s == "medium") return LoadClass::Medium;
  if (s == "high") return LoadClass::High;
  throw std::invalid_argument("unknown load class '" + s + "' (expected low|medium|high)");
}

struct OccupancyBand {
  double lo;
  double hi;
  double mid() const { return 0.5 * (lo + hi); }
  bool contains(double x) const { return x >= lo && x <= hi; }
};

inline OccupancyBand band_of(LoadClass c) {
  switch (c) {
    case LoadClass::Low: return {0.15, 0.30};
    case LoadClass::Medium: return {0.35, 0.50};
    case LoadClass::High: return {0.60, 0.80};
    case LoadClass::OutOfBand: break;
  }
  throw std::invalid_argument("band_of: OutOfBand has no band");
}

/// Buffer-occupancy load classes; values in the gaps are reported as OutOfBand.
inline LoadClass classify_load(double mean_occupancy) {
  if (mean_occupancy < 0.0 || mean_occupancy > 1.0) throw std::invalid_argument("classify_load: occupancy outside [0,1]");
  for (LoadClass c : {LoadClass::Low, LoadClass::Medium, LoadClass::High})
    if (band_of(c).contains(mean_occupancy)) return c;
  return LoadClass::OutOfBand;
}

enum class FlowKind { FtpDl, FtpUl, VoipDl, VoipUl };

inline bool is_voip(FlowKind k) { return k == FlowKind::VoipDl || k == FlowKind::VoipUl; }
inline bool is_downlink(FlowKind k) { return k == FlowKind::FtpDl || k == FlowKind::VoipDl; }

/// One unit of offered traffic: an FTP file or a VoIP packet.
struct Job {
  std::uint64_t id = 0;
  FlowKind kind = FlowKind::FtpDl;
  int client = -1;  // index into the client table
  int src = -1;     // transmitting node
  int dst = -1;     // receiving node
  std::int64_t bytes = 0;
  std::int64_t queued = 0;     // not yet handed to the air
  std::int64_t in_flight = 0;  // sent, outcome pending
  std::int64_t delivered = 0;
  std::int64_t dropped = 0;
  SimTime arrival;
  std::optional<SimTime> first_service;
  std::optional<SimTime> completion;

  bool resolved() const { return queued == 0 && in_flight == 0; }
  bool complete() const { return delivered == bytes; }
};

/// Byte ledger of one flow. delivered + in_flight + dropped == generated.
struct FlowLedger {
  std::int64_t generated = 0;
  std::int64_t delivered = 0;
  std::int64_t in_flight = 0;  // queued or on air
  std::int64_t dropped = 0;

  bool balanced() const { return delivered + in_flight + dropped == generated; }
};

/// Per-node FIFO of job ids with VoIP served ahead of file data, plus the
/// busy log used for buffer occupancy.
class TxBuffer {
 public:
  void push(const Job& job, SimTime now) {
    (is_voip(job.kind) ? voip_ : files_).push_back(job.id);
    ++unresolved_;
    log_.set_busy(true, now);
  }

  /// Called whenever a job becomes resolved (fully delivered or dropped).
  void resolve(std::uint64_t id, SimTime now) {
    auto drop_id = [id](std::vector<std::uint64_t>& v) { std::erase(v, id); };
    drop_id(voip_);
    drop_id(files_);
    if (unresolved_ > 0) --unresolved_;
    if (unresolved_ == 0) log_.set_busy(false, now);
  }

  /// Job ids in service order.
  std::vector<std::uint64_t> order() const {
    std::vector<std::uint64_t> all(voip_);
    all.insert(all.end(), files_.begin(), files_.end());
    return all;
  }

  bool empty() const { return unresolved_ == 0; }
  std::size_t unresolved() const { return unresolved_; }
  const BusyLog& busy_log() const { return log_; }

 private:
  std::vector<std::uint64_t> voip_;
  std::vector<std::uint64_t> files_;
  std::size_t unresolved_ = 0;
  BusyLog log_;
};

}  // namespace coexist::traffic
