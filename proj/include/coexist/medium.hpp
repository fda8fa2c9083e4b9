// Shared unlicensed channel: geometry, log-distance pathloss with frozen
// shadowing, energy sensing and SINR-based reception.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "coexist/sim_core.hpp"

namespace coexist {

enum class Technology { LAA, WiFi };
enum class NodeKind { LaaEnb, LaaUe, WifiAp, WifiSta };
enum class BurstKind { Data, Drs, Reservation, Ack };

inline const char* to_string(Technology t) { return t == Technology::LAA ? "LAA" : "WiFi"; }

inline const char* to_string(BurstKind k) {
  switch (k) {
    case BurstKind::Data: return "data";
    case BurstKind::Drs: return "drs";
    case BurstKind::Reservation: return "reservation";
    case BurstKind::Ack: return "ack";
  }
  return "?";
}

inline Technology technology_of(NodeKind k) {
  return (k == NodeKind::LaaEnb || k == NodeKind::LaaUe) ? Technology::LAA : Technology::WiFi;
}

inline bool is_infrastructure(NodeKind k) { return k == NodeKind::LaaEnb || k == NodeKind::WifiAp; }

struct NodePosition {
  double x = 0.0;
  double y = 0.0;
  int node_id = 0;
  int operator_id = 0;
  NodeKind kind = NodeKind::WifiAp;
};

struct ChannelModel {
  double pathloss_exponent = 3.0;
  double reference_loss_db = 46.4;  // at 1 m
  double wall_loss_db = 0.0;        // added once between nodes of different operators
  double shadowing_sigma_db = 6.0;
  double noise_figure_db = 9.0;
  double bandwidth_mhz = 20.0;
  double min_distance_m = 0.5;

  void validate() const {
    if (reference_loss_db < 0 || wall_loss_db < 0 || shadowing_sigma_db < 0 || pathloss_exponent < 0 ||
        noise_figure_db < 0)
      throw std::invalid_argument("ChannelModel: loss terms must be non-negative");
    if (!(bandwidth_mhz > 0)) throw std::invalid_argument("ChannelModel: bandwidth_mhz must be positive");
    if (!(min_distance_m > 0)) throw std::invalid_argument("ChannelModel: min_distance_m must be positive");
  }
};

inline double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }

inline double mw_to_dbm(double mw) {
  return mw > 0.0 ? 10.0 * std::log10(mw) : -std::numeric_limits<double>::infinity();
}

/// Thermal noise floor: -174 dBm/Hz + 10 log10(B) + NF.
inline double noise_floor_dbm(const ChannelModel& m) {
  return -174.0 + 10.0 * std::log10(m.bandwidth_mhz * 1e6) + m.noise_figure_db;
}

inline double distance_m(const NodePosition& a, const NodePosition& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

/// Log-distance pathloss. `shadowing_db` is the frozen per-link draw.
inline double pathloss_db(const ChannelModel& m, const NodePosition& a, const NodePosition& b,
                          double shadowing_db = 0.0) {
  const double d = std::max(distance_m(a, b), m.min_distance_m);
  double loss = m.reference_loss_db + 10.0 * m.pathloss_exponent * std::log10(d) + shadowing_db;
  if (a.operator_id != b.operator_id) loss += m.wall_loss_db;
  return std::max(loss, 0.0);
}

/// Frozen lognormal shadowing of the (unordered) link {a, b} for one replication.
inline double link_shadowing_db(std::uint64_t seed, int a, int b, double sigma_db) {
  if (sigma_db <= 0.0) return 0.0;
  if (a > b) std::swap(a, b);
  RngStream rng(seed, "shadow." + std::to_string(a) + "." + std::to_string(b));
  return rng.normal(0.0, sigma_db);
}

/// Truncated-Shannon link abstraction.
struct RateModel {
  double bandwidth_mhz = 20.0;
  double efficiency_laa = 0.75;
  double efficiency_wifi = 0.65;
  double cap_laa_bps = 100.0e6;
  double cap_wifi_bps = 86.7e6;
  double decode_margin_db = 3.0;
  // Outer-loop link adaptation: per-link SINR backoff raised on each failure
  // and lowered on each success (step ratio sets the target error rate).
  // LTE's lowest MCS fits the same subframe; Wi-Fi's lowest rate stretches
  // the PPDU, so its backoff range is kept short.
  bool link_adaptation = true;
  double la_failure_step_db = 1.0;
  double la_success_step_db = 0.1;
  double la_max_backoff_laa_db = 30.0;
  double la_max_backoff_wifi_db = 10.0;
  double min_rate_laa_bps = 1.0e6;
  double min_rate_wifi_bps = 6.5e6;  // lowest 20 MHz 802.11ac MCS

  double efficiency(Technology t) const { return t == Technology::LAA ? efficiency_laa : efficiency_wifi; }
  double cap(Technology t) const { return t == Technology::LAA ? cap_laa_bps : cap_wifi_bps; }
  double min_rate(Technology t) const { return t == Technology::LAA ? min_rate_laa_bps : min_rate_wifi_bps; }
  double la_max_backoff_db(Technology t) const {
    return t == Technology::LAA ? la_max_backoff_laa_db : la_max_backoff_wifi_db;
  }
};

inline double rate_bps(double sinr_db, Technology tech, const RateModel& rm = {}) {
  if (std::isnan(sinr_db)) return 0.0;
  const double lin = std::pow(10.0, sinr_db / 10.0);
  const double shannon = rm.bandwidth_mhz * 1e6 * rm.efficiency(tech) * std::log2(1.0 + lin);
  return std::min(rm.cap(tech), shannon);
}

/// SINR (dB) at which the truncated-Shannon map yields `rate`.
inline double sinr_for_rate_db(double rate, Technology tech, const RateModel& rm = {}) {
  const double se = rate / (rm.bandwidth_mhz * 1e6 * rm.efficiency(tech));
  return 10.0 * std::log10(std::pow(2.0, se) - 1.0);
}

/// Minimum SINR a frame sent at `rate` must keep over its whole duration.
inline double decode_threshold_db(double rate, Technology tech, const RateModel& rm = {}) {
  return sinr_for_rate_db(rate, tech, rm) - rm.decode_margin_db;
}

struct ActiveTransmission {
  std::uint64_t id = 0;
  int tx_node = -1;
  SimTime start;
  SimTime end;
  double tx_power_dbm = 23.0;
  int carrier_id = 0;
  BurstKind kind = BurstKind::Data;
  Technology tech = Technology::WiFi;
};

enum class Reception { Decoded, Failed };

/// Owns node geometry, per-link losses and the set of on-air transmissions.
class Medium {
 public:
  Medium(ChannelModel model, std::vector<NodePosition> nodes, std::uint64_t shadow_seed)
      : model_(model), nodes_(std::move(nodes)) {
    model_.validate();
    const std::size_t n = nodes_.size();
    for (std::size_t i = 0; i < n; ++i) {
      if (nodes_[i].node_id != static_cast<int>(i))
        throw std::invalid_argument("Medium: node_id must equal its index");
    }
    loss_db_.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double shadow = link_shadowing_db(shadow_seed, static_cast<int>(i), static_cast<int>(j),
                                                model_.shadowing_sigma_db);
        const double pl = coexist::pathloss_db(model_, nodes_[i], nodes_[j], shadow);
        loss_db_[i * n + j] = pl;
        loss_db_[j * n + i] = pl;
      }
    }
    noise_mw_ = dbm_to_mw(noise_floor_dbm(model_));
  }

  const ChannelModel& model() const { return model_; }
  const std::vector<NodePosition>& nodes() const { return nodes_; }
  std::size_t node_count() const { return nodes_.size(); }
  double noise_dbm() const { return noise_floor_dbm(model_); }
  double noise_mw() const { return noise_mw_; }

  double pathloss_db(int a, int b) const {
    return a == b ? 0.0 : loss_db_[static_cast<std::size_t>(a) * nodes_.size() + static_cast<std::size_t>(b)];
  }

  double received_dbm(int tx, double tx_power_dbm, int rx) const { return tx_power_dbm - pathloss_db(tx, rx); }

  /// Registers a transmission; returns its id. Keep `end > start`.
  std::uint64_t add(ActiveTransmission tx) {
    if (tx.end <= tx.start) throw std::invalid_argument("Medium::add: end must be after start");
    if (tx.tx_node < 0 || static_cast<std::size_t>(tx.tx_node) >= nodes_.size())
      throw std::invalid_argument("Medium::add: unknown tx node");
    tx.id = next_id_++;
    Stored s{tx, {}};
    s.rx_mw.resize(nodes_.size());
    for (std::size_t r = 0; r < nodes_.size(); ++r)
      s.rx_mw[r] = static_cast<int>(r) == tx.tx_node ? 0.0
                                                     : dbm_to_mw(received_dbm(tx.tx_node, tx.tx_power_dbm,
                                                                              static_cast<int>(r)));
    live_.push_back(std::move(s));
    if (keep_log_) log_.push_back(tx);
    return tx.id;
  }

  /// Shortens a transmission that is cut off early. New end must not precede start.
  void truncate(std::uint64_t id, SimTime new_end) {
    for (auto& s : live_) {
      if (s.tx.id == id) {
        if (new_end <= s.tx.start) throw std::invalid_argument("Medium::truncate: empty transmission");
        s.tx.end = std::min(s.tx.end, new_end);
        if (keep_log_)
          for (auto& l : log_)
            if (l.id == id) l.end = s.tx.end;
        return;
      }
    }
    throw std::invalid_argument("Medium::truncate: unknown transmission");
  }

  const ActiveTransmission* find(std::uint64_t id) const {
    for (const auto& s : live_)
      if (s.tx.id == id) return &s.tx;
    return nullptr;
  }

  /// Drops transmissions that ended at or before `t`.
  void prune_before(SimTime t) {
    std::erase_if(live_, [t](const Stored& s) { return s.tx.end <= t; });
  }

  void keep_log(bool on) { keep_log_ = on; }
  const std::vector<ActiveTransmission>& log() const { return log_; }

  /// Instantaneous energy at `listener` at time t, in dBm, noise included.
  double sensed_energy_dbm(int listener, SimTime t, int exclude_node = -1) const {
    return mw_to_dbm(energy_mw_at(listener, t, exclude_node) + noise_mw_);
  }

  /// Peak sensed energy over the half-open interval [a, b).
  double max_energy_dbm(int listener, SimTime a, SimTime b, int exclude_node = -1) const {
    double peak = energy_mw_at(listener, a, exclude_node);
    for (const auto& s : live_) {
      if (s.tx.tx_node == exclude_node) continue;
      if (s.tx.start > a && s.tx.start < b) peak = std::max(peak, energy_mw_at(listener, s.tx.start, exclude_node));
    }
    return mw_to_dbm(peak + noise_mw_);
  }

  /// Time-averaged received power over [a, b), noise included (an L1 RSSI sample).
  double mean_energy_dbm(int listener, SimTime a, SimTime b, int exclude_node = -1) const {
    if (b <= a) throw std::invalid_argument("Medium::mean_energy_dbm: empty interval");
    double acc = 0.0;  // mW * ns
    for (const auto& s : live_) {
      if (s.tx.tx_node == exclude_node) continue;
      const SimTime lo = std::max(a, s.tx.start);
      const SimTime hi = std::min(b, s.tx.end);
      if (hi > lo) acc += s.rx_mw[static_cast<std::size_t>(listener)] * static_cast<double>((hi - lo).ns);
    }
    return mw_to_dbm(acc / static_cast<double>((b - a).ns) + noise_mw_);
  }

  /// Strongest single arrival of technology `tech` overlapping [a, b), dBm.
  double max_single_arrival_dbm(int listener, SimTime a, SimTime b, Technology tech, int exclude_node = -1) const {
    double best = 0.0;
    for (const auto& s : live_) {
      if (s.tx.tx_node == exclude_node || s.tx.tech != tech) continue;
      if (s.tx.start < b && s.tx.end > a) best = std::max(best, s.rx_mw[static_cast<std::size_t>(listener)]);
    }
    return mw_to_dbm(best);
  }

  /// True if `node` has any transmission of its own overlapping [a, b).
  bool transmitting(int node, SimTime a, SimTime b) const {
    for (const auto& s : live_)
      if (s.tx.tx_node == node && s.tx.start < b && s.tx.end > a) return true;
    return false;
  }

  /// Latest end time in (a, t] among transmissions other than exclude_node's.
  std::optional<SimTime> last_end_in(int exclude_node, SimTime a, SimTime t) const {
    std::optional<SimTime> best;
    for (const auto& s : live_) {
      if (s.tx.tx_node == exclude_node) continue;
      if (s.tx.end > a && s.tx.end <= t && (!best || s.tx.end > *best)) best = s.tx.end;
    }
    return best;
  }

  double sinr_db(int rx, std::uint64_t wanted_id, SimTime t) const {
    const Stored* w = stored(wanted_id);
    if (!w || !(w->tx.start <= t && t < w->tx.end))
      throw std::invalid_argument("Medium::sinr_db: wanted transmission not active at t");
    const double signal = w->rx_mw[static_cast<std::size_t>(rx)];
    return 10.0 * std::log10(signal / (noise_mw_ + interference_mw(rx, *w, t)));
  }

  /// Minimum SINR at `rx` over [a, b) ⊆ the wanted transmission.
  double min_sinr_db(int rx, std::uint64_t wanted_id, SimTime a, SimTime b) const {
    const Stored* w = stored(wanted_id);
    if (!w) throw std::invalid_argument("Medium::min_sinr_db: unknown transmission");
    a = std::max(a, w->tx.start);
    b = std::min(b, w->tx.end);
    if (b <= a) throw std::invalid_argument("Medium::min_sinr_db: empty interval");
    double worst_i = interference_mw(rx, *w, a);
    for (const auto& s : live_) {
      if (s.tx.id == w->tx.id) continue;
      if (s.tx.start > a && s.tx.start < b) worst_i = std::max(worst_i, interference_mw(rx, *w, s.tx.start));
    }
    const double signal = w->rx_mw[static_cast<std::size_t>(rx)];
    return 10.0 * std::log10(signal / (noise_mw_ + worst_i));
  }

  /// Decoded iff min SINR over [a, b) >= threshold and the receiver is not
  /// itself transmitting (half duplex).
  Reception reception_outcome(std::uint64_t wanted_id, int rx, double threshold_db,
                              std::optional<SimTime> a = std::nullopt,
                              std::optional<SimTime> b = std::nullopt) const {
    const Stored* w = stored(wanted_id);
    if (!w) throw std::invalid_argument("Medium::reception_outcome: unknown transmission");
    const SimTime from = a.value_or(w->tx.start);
    const SimTime to = b.value_or(w->tx.end);
    if (transmitting(rx, from, to)) return Reception::Failed;
    return min_sinr_db(rx, wanted_id, from, to) >= threshold_db ? Reception::Decoded : Reception::Failed;
  }

  /// Noise-limited SNR of the link a -> b at the given transmit power.
  double snr_db(int tx, double tx_power_dbm, int rx) const {
    return received_dbm(tx, tx_power_dbm, rx) - noise_dbm();
  }

 private:
  struct Stored {
    ActiveTransmission tx;
    std::vector<double> rx_mw;
  };

  const Stored* stored(std::uint64_t id) const {
    for (const auto& s : live_)
      if (s.tx.id == id) return &s;
    return nullptr;
  }

  double energy_mw_at(int listener, SimTime t, int exclude_node) const {
    double sum = 0.0;
    for (const auto& s : live_) {
      if (s.tx.tx_node == exclude_node) continue;
      if (s.tx.start <= t && t < s.tx.end) sum += s.rx_mw[static_cast<std::size_t>(listener)];
    }
    return sum;
  }

  double interference_mw(int rx, const Stored& wanted, SimTime t) const {
    double sum = 0.0;
    for (const auto& s : live_) {
      if (s.tx.id == wanted.tx.id || s.tx.tx_node == rx) continue;
      if (s.tx.start <= t && t < s.tx.end) sum += s.rx_mw[static_cast<std::size_t>(rx)];
    }
    return sum;
  }

  ChannelModel model_;
  std::vector<NodePosition> nodes_;
  std::vector<double> loss_db_;
  double noise_mw_ = 0.0;
  std::vector<Stored> live_;
  std::vector<ActiveTransmission> log_;
  bool keep_log_ = false;
  std::uint64_t next_id_ = 1;
};

}  // namespace coexist
