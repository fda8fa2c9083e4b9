// LAA downlink channel access: Cat-4 listen-before-talk, energy-detection
// threshold, contention-window adaptation from HARQ-ACK feedback, MCOT,
// discovery-signal gating, partial subframes, multicarrier LBT and the
// 34 us sensing gap required in Japan.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "coexist/sim_core.hpp"

namespace coexist::laa {

// ---------------------------------------------------------------------------
// Priority classes

struct PriorityClassParams {
  int class_id = 3;
  std::vector<int> cws_set{15, 31, 63};
  std::int64_t mcot_shared_us = 8000;
  std::int64_t mcot_exclusive_us = 10000;
  int defer_slots = 3;

  int cw_min() const { return cws_set.front(); }
  int cw_max() const { return cws_set.back(); }

  bool contains(int cws) const { return std::find(cws_set.begin(), cws_set.end(), cws) != cws_set.end(); }

  /// Next larger allowed value, clamped at the maximum.
  int next_larger(int cws) const {
    auto it = std::upper_bound(cws_set.begin(), cws_set.end(), cws);
    return it == cws_set.end() ? cws_set.back() : *it;
  }

  void validate() const {
    if (class_id < 1 || class_id > 4) throw std::invalid_argument("priority class id must be 1..4");
    if (cws_set.empty()) throw std::invalid_argument("priority class: empty CWS set");
    for (std::size_t i = 1; i < cws_set.size(); ++i)
      if (cws_set[i] <= cws_set[i - 1]) throw std::invalid_argument("priority class: CWS set must be strictly increasing");
    if (cws_set.front() < 0) throw std::invalid_argument("priority class: negative CWS");
    if (mcot_shared_us <= 0 || mcot_shared_us > mcot_exclusive_us)
      throw std::invalid_argument("priority class: need 0 < mcot_shared_us <= mcot_exclusive_us");
    if (defer_slots < 0) throw std::invalid_argument("priority class: negative defer_slots");
  }
};

/// Built-in parameters for classes 3 and 4. Classes 1 and 2 have no built-in
/// values and must come from the scenario configuration.
inline PriorityClassParams default_priority_class(int class_id) {
  switch (class_id) {
    case 3: return PriorityClassParams{3, {15, 31, 63}, 8000, 10000, 3};
    case 4: return PriorityClassParams{4, {15, 31, 63, 127, 255, 511, 1023}, 8000, 10000, 7};
    default:
      throw std::invalid_argument("no built-in parameters for priority class " + std::to_string(class_id) +
                                  "; supply them in the configuration");
  }
}

inline std::int64_t mcot_us(const PriorityClassParams& cls, bool exclusive_band) {
  return exclusive_band ? cls.mcot_exclusive_us : cls.mcot_shared_us;
}

// ---------------------------------------------------------------------------
// Energy detection threshold

struct EdThresholdParams {
  double p_h_dbm = 23.0;  // reference power
  double p_tx_dbm = 23.0; // configured maximum transmit power on the carrier
  double bw_mhz = 20.0;
  bool shared_band = true;
  std::optional<double> exclusive_threshold_dbm;  // defaults to T_max
};

inline double ed_threshold_tmax_dbm(double bw_mhz) { return -75.0 + 10.0 * std::log10(bw_mhz); }

/// Maximum ED threshold for Cat-4 LBT. In a shared band:
///   TH = max(-72 dBm scaled to bw, min(T_max, T_max - 10 + (P_H - P_TX)))
/// with T_max = -75 dBm/MHz + 10 log10(bw).
inline double ed_threshold_dbm(const EdThresholdParams& p) {
  if (!(p.bw_mhz > 0)) throw std::invalid_argument("ed_threshold_dbm: bw_mhz must be positive");
  const double t_max = ed_threshold_tmax_dbm(p.bw_mhz);
  if (!p.shared_band) return p.exclusive_threshold_dbm.value_or(t_max);
  const double floor_dbm = -72.0 + 10.0 * std::log10(p.bw_mhz / 20.0);
  return std::max(floor_dbm, std::min(t_max, t_max - 10.0 + (p.p_h_dbm - p.p_tx_dbm)));
}

// ---------------------------------------------------------------------------
// HARQ feedback and contention window adaptation

enum class HarqValue { Ack, Nack, Dtx };

struct HarqFeedback {
  std::uint64_t burst_id = 0;
  int subframe_index = 0;
  HarqValue value = HarqValue::Ack;
  bool scheduled_on_pcell = false;
  bool actually_scheduled = true;
};

/// Result of counting one reference subframe's feedback.
struct NackCount {
  int nack = 0;
  int total = 0;
};

/// DTX counts as NACK unless the UE was not actually scheduled or its
/// scheduling came through the licensed PCell; those entries are dropped.
inline NackCount count_nacks(std::span<const HarqFeedback> feedbacks) {
  NackCount c;
  for (const auto& f : feedbacks) {
    switch (f.value) {
      case HarqValue::Ack: ++c.total; break;
      case HarqValue::Nack:
        ++c.total;
        ++c.nack;
        break;
      case HarqValue::Dtx:
        if (!f.actually_scheduled || f.scheduled_on_pcell) break;
        ++c.total;
        ++c.nack;
        break;
    }
  }
  return c;
}

/// New CWS after a reference subframe: >= 80 % NACK steps up (clamped at the
/// class maximum), otherwise reset to the minimum. No usable feedback leaves
/// the CWS unchanged.
inline int cws_update(std::span<const HarqFeedback> feedbacks, const PriorityClassParams& cls, int current_cws) {
  if (!cls.contains(current_cws)) throw std::invalid_argument("cws_update: current CWS not in class set");
  const NackCount c = count_nacks(feedbacks);
  if (c.total == 0) return current_cws;
  if (c.nack * 10 >= c.total * 8) return cls.next_larger(current_cws);
  return cls.cw_min();
}

// ---------------------------------------------------------------------------
// Cat-4 LBT state machine

enum class LbtState { Idle, Deferring, Backoff, TxOngoing, GapSensing };
enum class LbtAction { KeepSensing, Decrement, Freeze, TransmitNow };

inline const char* to_string(LbtAction a) {
  switch (a) {
    case LbtAction::KeepSensing: return "keep_sensing";
    case LbtAction::Decrement: return "decrement";
    case LbtAction::Freeze: return "freeze";
    case LbtAction::TransmitNow: return "transmit_now";
  }
  return "?";
}

/// Per-carrier LBT state. The driver feeds one sensing period at a time: the
/// defer duration is a 16 us period followed by `defer_slots` ECCA slots, and
/// backoff proceeds in ECCA slots. A busy period freezes the counter and the
/// driver must wait for an idle medium before calling `restart_defer`.
class LbtEngine {
 public:
  explicit LbtEngine(PriorityClassParams cls, int carrier_id = 0, std::int64_t ecca_slot_us = 9,
                     std::int64_t defer_base_us = 16)
      : cls_(std::move(cls)), carrier_id_(carrier_id), ecca_slot_us_(ecca_slot_us), defer_base_us_(defer_base_us) {
    cls_.validate();
    if (ecca_slot_us_ < 9) throw std::invalid_argument("LbtEngine: ECCA slot must be at least 9 us");
    if (defer_base_us_ < 0) throw std::invalid_argument("LbtEngine: negative defer base");
    cws_ = cls_.cw_min();
  }

  LbtState state() const { return state_; }
  int counter() const { return counter_; }
  int cws() const { return cws_; }
  int carrier_id() const { return carrier_id_; }
  const PriorityClassParams& priority_class() const { return cls_; }
  std::int64_t ecca_slot_us() const { return ecca_slot_us_; }
  std::int64_t defer_us() const { return defer_base_us_ + cls_.defer_slots * ecca_slot_us_; }
  std::int64_t mcot_spent_us() const { return mcot_spent_us_; }

  /// Begins a new channel access: draws the counter in [0, cws] and starts deferring.
  int start_access(RngStream& rng) {
    return start_access_with_counter(static_cast<int>(rng.uniform_int(0, cws_)));
  }

  int start_access_with_counter(int counter) {
    if (state_ != LbtState::Idle) throw std::logic_error("LbtEngine::start_access: access already in progress");
    if (counter < 0 || counter > cws_) throw std::invalid_argument("LbtEngine: counter outside [0, cws]");
    counter_ = counter;
    state_ = LbtState::Deferring;
    defer_index_ = 0;
    mcot_spent_us_ = 0;
    return counter_;
  }

  /// Length of the sensing period that the next `advance` call will judge.
  SimTime next_period() const {
    if (state_ == LbtState::Deferring && defer_index_ == 0) return SimTime::from_us(defer_base_us_);
    if (state_ == LbtState::Deferring || state_ == LbtState::Backoff) return SimTime::from_us(ecca_slot_us_);
    throw std::logic_error("LbtEngine::next_period: not sensing");
  }

  /// Consumes the outcome of the just-elapsed sensing period.
  LbtAction advance(bool channel_idle) {
    switch (state_) {
      case LbtState::Deferring:
        if (!channel_idle) {
          defer_index_ = 0;
          return LbtAction::Freeze;
        }
        if (++defer_index_ <= cls_.defer_slots) return LbtAction::KeepSensing;
        if (counter_ == 0) {
          state_ = LbtState::TxOngoing;
          return LbtAction::TransmitNow;
        }
        state_ = LbtState::Backoff;
        return LbtAction::KeepSensing;
      case LbtState::Backoff:
        if (!channel_idle) {
          state_ = LbtState::Deferring;
          defer_index_ = 0;
          return LbtAction::Freeze;
        }
        if (--counter_ == 0) {
          state_ = LbtState::TxOngoing;
          return LbtAction::TransmitNow;
        }
        return LbtAction::Decrement;
      case LbtState::Idle:
        throw std::logic_error("LbtEngine::advance: no access in progress");
      case LbtState::TxOngoing:
      case LbtState::GapSensing:
        throw std::logic_error("LbtEngine::advance: called while transmitting");
    }
    return LbtAction::Freeze;
  }

  /// After a freeze, the driver calls this once the medium is idle again.
  void restart_defer() {
    if (state_ != LbtState::Deferring) throw std::logic_error("LbtEngine::restart_defer: not deferring");
    defer_index_ = 0;
  }

  /// Interrupts sensing (e.g. by an own discovery transmission): counter held, defer restarts.
  void interrupt() {
    if (state_ == LbtState::Backoff || state_ == LbtState::Deferring) {
      state_ = LbtState::Deferring;
      defer_index_ = 0;
    }
  }

  /// Gives up a granted opportunity before any airtime was used (counter stays 0).
  void abandon_grant() {
    if (state_ != LbtState::TxOngoing) throw std::logic_error("LbtEngine::abandon_grant: no grant");
    state_ = LbtState::Deferring;
    defer_index_ = 0;
  }

  void add_airtime_us(std::int64_t us) { mcot_spent_us_ += us; }

  void begin_gap() {
    if (state_ != LbtState::TxOngoing) throw std::logic_error("LbtEngine::begin_gap: not transmitting");
    state_ = LbtState::GapSensing;
  }

  /// Outcome of the 34 us gap: idle resumes the burst, busy ends it.
  void end_gap(bool idle) {
    if (state_ != LbtState::GapSensing) throw std::logic_error("LbtEngine::end_gap: not in gap");
    state_ = idle ? LbtState::TxOngoing : LbtState::Idle;
  }

  void finish_burst() {
    if (state_ != LbtState::TxOngoing && state_ != LbtState::GapSensing)
      throw std::logic_error("LbtEngine::finish_burst: no burst");
    state_ = LbtState::Idle;
  }

  int update_cws(std::span<const HarqFeedback> feedbacks) {
    cws_ = cws_update(feedbacks, cls_, cws_);
    return cws_;
  }

 private:
  PriorityClassParams cls_;
  int carrier_id_;
  std::int64_t ecca_slot_us_;
  std::int64_t defer_base_us_;
  LbtState state_ = LbtState::Idle;
  int counter_ = 0;
  int cws_ = 15;
  int defer_index_ = 0;
  std::int64_t mcot_spent_us_ = 0;
};

// ---------------------------------------------------------------------------
// Discovery reference signal

inline constexpr std::int64_t kDrsIdleObservationUs = 25;
inline constexpr int kSymbolsPerSubframe = 14;
inline constexpr std::int64_t kSubframeNs = 1'000'000;
inline constexpr std::int64_t kSlotNs = 500'000;

/// Offset of symbol boundary k (0..14) from its subframe start, floor-rounded to ns.
constexpr std::int64_t symbol_offset_ns(int k) { return static_cast<std::int64_t>(k) * kSubframeNs / kSymbolsPerSubframe; }

struct DrsConfig {
  int dmtc_period_ms = 40;
  int dmtc_offset_ms = 0;
  int dmtc_window_ms = 6;
  int drs_symbols = 12;

  void validate() const {
    if (dmtc_period_ms != 40 && dmtc_period_ms != 80 && dmtc_period_ms != 160)
      throw std::invalid_argument("DMTC period must be 40, 80 or 160 ms");
    if (dmtc_window_ms != 6) throw std::invalid_argument("DMTC window is fixed at 6 ms");
    if (dmtc_offset_ms < 0 || dmtc_offset_ms >= dmtc_period_ms)
      throw std::invalid_argument("DMTC offset must lie in [0, period)");
    if (drs_symbols <= 0 || drs_symbols > kSymbolsPerSubframe) throw std::invalid_argument("bad DRS duration");
  }

  SimTime drs_duration() const { return SimTime{symbol_offset_ns(drs_symbols)}; }
};

/// Index of the DMTC occasion whose period contains `t` (negative before the first).
inline std::int64_t dmtc_occasion(SimTime t, const DrsConfig& cfg) {
  const std::int64_t rel = t.ns - SimTime::from_ms(cfg.dmtc_offset_ms).ns;
  const std::int64_t period = SimTime::from_ms(cfg.dmtc_period_ms).ns;
  return rel >= 0 ? rel / period : -((-rel + period - 1) / period);
}

inline SimTime dmtc_occasion_start(std::int64_t occasion, const DrsConfig& cfg) {
  return SimTime{SimTime::from_ms(cfg.dmtc_offset_ms).ns + occasion * SimTime::from_ms(cfg.dmtc_period_ms).ns};
}

inline bool in_dmtc_window(SimTime t, const DrsConfig& cfg) {
  const SimTime start = dmtc_occasion_start(dmtc_occasion(t, cfg), cfg);
  return t >= start && t < start + SimTime::from_ms(cfg.dmtc_window_ms);
}

/// DRS without PDSCH may go out inside the DMTC window after a single idle
/// observation of at least 25 us. Caller tracks one DRS per occasion.
inline bool drs_permitted(SimTime now, const DrsConfig& cfg, SimTime idle_since) {
  return in_dmtc_window(now, cfg) && now - idle_since >= SimTime::from_us(kDrsIdleObservationUs);
}

// ---------------------------------------------------------------------------
// Partial subframes

inline constexpr std::array<int, 7> kEndingSymbolCounts{3, 6, 9, 10, 11, 12, 14};

inline bool is_valid_ending(int symbols) {
  return std::find(kEndingSymbolCounts.begin(), kEndingSymbolCounts.end(), symbols) != kEndingSymbolCounts.end();
}

/// Largest allowed ending length <= limit, or 0 if none.
inline int largest_ending_at_most(int limit) {
  int best = 0;
  for (int v : kEndingSymbolCounts)
    if (v <= limit) best = v;
  return best;
}

/// Smallest allowed ending length in [need, limit], or 0 if none.
inline int smallest_ending_in(int need, int limit) {
  for (int v : kEndingSymbolCounts)
    if (v >= need && v <= limit) return v;
  return 0;
}

struct SubframeSegment {
  SimTime start;
  int start_symbol = 0;  // symbol index within its subframe (0 or 7 for the first)
  int symbol_count = 0;

  SimTime end() const {
    const SimTime sf{start.ns - symbol_offset_ns(start_symbol)};
    return SimTime{sf.ns + symbol_offset_ns(start_symbol + symbol_count)};
  }
  SimTime duration() const { return end() - start; }
};

struct BurstPlan {
  SimTime grant;
  SimTime data_start;  // first slot boundary at or after grant
  std::vector<SubframeSegment> segments;

  SimTime reservation() const { return data_start - grant; }
  SimTime data_airtime() const {
    SimTime t{};
    for (const auto& s : segments) t += s.duration();
    return t;
  }
  SimTime end() const { return segments.empty() ? data_start : segments.back().end(); }
};

/// Lays out PDSCH segments after an LBT grant. Data starts at the next slot
/// boundary; interior segments are whole subframes; the final segment takes
/// the largest allowed ending length fitting the remaining budget.
inline BurstPlan partial_subframe_plan(SimTime grant_time, std::int64_t mcot_budget_us) {
  if (mcot_budget_us <= 0) throw std::invalid_argument("partial_subframe_plan: budget must be positive");
  BurstPlan plan;
  plan.grant = grant_time;
  plan.data_start = SimTime{(grant_time.ns + kSlotNs - 1) / kSlotNs * kSlotNs};

  int remaining = static_cast<int>(mcot_budget_us * 1000 * kSymbolsPerSubframe / kSubframeNs);
  SimTime pos = plan.data_start;
  int start_symbol = (pos.ns % kSubframeNs == 0) ? 0 : 7;
  while (remaining >= kEndingSymbolCounts.front()) {
    const int room = kSymbolsPerSubframe - start_symbol;
    int count;
    if (remaining >= room) {
      count = room;
      // A 7-symbol tail is not an allowed ending; shorten if nothing can follow.
      if (remaining - room < kEndingSymbolCounts.front() && !is_valid_ending(count))
        count = largest_ending_at_most(count);
    } else {
      count = largest_ending_at_most(remaining);
    }
    if (count == 0) break;
    SubframeSegment seg{pos, start_symbol, count};
    plan.segments.push_back(seg);
    remaining -= count;
    if (count < room) break;
    pos = seg.end();
    start_symbol = 0;
  }
  return plan;
}

/// Cuts a plan after segment `last`, making it the final segment with the
/// smallest allowed length carrying `symbols_needed` (or the largest allowed
/// one that fits when none can carry it all). Returns the kept symbol count.
inline int truncate_plan(BurstPlan& plan, std::size_t last, int symbols_needed) {
  if (last >= plan.segments.size()) throw std::out_of_range("truncate_plan: segment index");
  plan.segments.resize(last + 1);
  auto& seg = plan.segments.back();
  int count = smallest_ending_in(std::max(symbols_needed, 1), seg.symbol_count);
  if (count == 0) count = largest_ending_at_most(seg.symbol_count);
  if (count == 0) {
    plan.segments.pop_back();
    return 0;
  }
  seg.symbol_count = count;
  return count;
}

// ---------------------------------------------------------------------------
// Japan sensing gap

inline constexpr std::int64_t kJapanGapUs = 34;
inline constexpr std::int64_t kJapanGapEveryUs = 4000;

/// Gap required now, given continuous airtime so far and whether the burst goes on.
inline std::int64_t japan_gap_check(std::int64_t continuous_tx_us, bool burst_continues) {
  if (!burst_continues || continuous_tx_us <= 0) return 0;
  return continuous_tx_us % kJapanGapEveryUs == 0 ? kJapanGapUs : 0;
}

// ---------------------------------------------------------------------------
// Multicarrier LBT

enum class MulticarrierMode { A, B };

/// Snapshot of one carrier at decision time.
struct CarrierView {
  int carrier_id = 0;
  bool designated = false;         // mode A: the carrier running Cat-4 LBT
  bool backoff_complete = false;   // Cat-4 counter reached zero
  SimTime completed_at{};          // when the counter reached zero
  bool idle_single_interval = false;  // mode A: idle over the last 25 us
  bool idle_before_alignment = false; // mode B: idle in the slot before the alignment instant
};

inline CarrierView view_of(const LbtEngine& e, bool designated = false) {
  CarrierView v;
  v.carrier_id = e.carrier_id();
  v.designated = designated;
  v.backoff_complete = e.state() == LbtState::TxOngoing;
  return v;
}

/// Mode A: gate on the designated carrier's Cat-4 completion, then add every
/// other carrier passing a 25 us single-interval check. Mode B: every carrier
/// that completed Cat-4 by the alignment instant self-defers until then and
/// is cleared if it is idle in the slot just before.
inline std::vector<int> multicarrier_lbt(MulticarrierMode mode, std::span<const CarrierView> carriers,
                                         SimTime alignment = SimTime{}) {
  if (carriers.empty()) throw std::invalid_argument("multicarrier_lbt: no carriers");
  std::vector<int> cleared;
  if (mode == MulticarrierMode::A) {
    auto d = std::find_if(carriers.begin(), carriers.end(), [](const CarrierView& c) { return c.designated; });
    if (d == carriers.end()) throw std::invalid_argument("multicarrier_lbt: mode A needs a designated carrier");
    if (!d->backoff_complete) return cleared;
    for (const auto& c : carriers)
      if (c.designated || c.idle_single_interval) cleared.push_back(c.carrier_id);
    return cleared;
  }
  for (const auto& c : carriers)
    if (c.backoff_complete && c.completed_at <= alignment && c.idle_before_alignment) cleared.push_back(c.carrier_id);
  return cleared;
}

}  // namespace coexist::laa
