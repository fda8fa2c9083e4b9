// Simplified 802.11 DCF: energy-based CCA, DIFS deferral, binary exponential
// backoff and stop-and-wait ACK with a retry limit.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "coexist/sim_core.hpp"

namespace coexist::wifi {

struct DcfParams {
  std::int64_t slot_us = 9;
  std::int64_t sifs_us = 16;
  std::int64_t difs_us = 34;
  int cw_min = 15;
  int cw_max = 1023;
  std::int64_t ack_duration_us = 44;
  std::int64_t max_ppdu_us = 2000;
  std::int64_t phy_header_us = 40;
  int retry_limit = 7;
  double cca_ed_dbm = -62.0;
  bool preamble_detect = true;  // also defer to Wi-Fi signals above preamble_detect_dbm
  double preamble_detect_dbm = -82.0;
  double ack_decode_sinr_db = 4.0;

  static bool is_cw_value(int cw) { return cw > 0 && ((cw + 1) & cw) == 0; }

  void validate() const {
    if (!is_cw_value(cw_min) || !is_cw_value(cw_max)) throw std::invalid_argument("DCF: cw values must be 2^k - 1");
    if (cw_min > cw_max) throw std::invalid_argument("DCF: cw_min > cw_max");
    if (slot_us <= 0 || sifs_us <= 0 || difs_us <= 0) throw std::invalid_argument("DCF: timings must be positive");
    if (ack_duration_us <= 0 || ack_duration_us >= 100) throw std::invalid_argument("DCF: ACK airtime must be in (0, 100) us");
    if (max_ppdu_us <= phy_header_us) throw std::invalid_argument("DCF: max_ppdu_us must exceed phy_header_us");
    if (retry_limit < 1) throw std::invalid_argument("DCF: retry_limit must be >= 1");
  }
};

enum class TxEvent { Success, Failure };

/// Failure doubles the window (2(cw+1)-1, clamped at cw_max); success resets it.
inline int cw_after(TxEvent ev, int cw, const DcfParams& p = {}) {
  if (ev == TxEvent::Success) return p.cw_min;
  return std::min(2 * (cw + 1) - 1, p.cw_max);
}

enum class DcfState { Idle, DifsWait, Backoff, Tx, AwaitAck };
enum class DcfAction { Wait, Decrement, Freeze, TransmitNow };
enum class FrameResult { Acked, Retry, Dropped };

inline const char* to_string(DcfAction a) {
  switch (a) {
    case DcfAction::Wait: return "wait";
    case DcfAction::Decrement: return "decrement";
    case DcfAction::Freeze: return "freeze";
    case DcfAction::TransmitNow: return "transmit_now";
  }
  return "?";
}

class DcfEngine {
 public:
  explicit DcfEngine(DcfParams p = {}) : p_(p) {
    p_.validate();
    cw_ = p_.cw_min;
  }

  const DcfParams& params() const { return p_; }
  DcfState state() const { return state_; }
  int cw() const { return cw_; }
  int counter() const { return counter_; }
  int retry_count() const { return retries_; }

  /// New attempt for the head-of-line frame: draw the counter and wait DIFS.
  int start_frame(RngStream& rng) { return start_frame_with_counter(static_cast<int>(rng.uniform_int(0, cw_))); }

  int start_frame_with_counter(int counter) {
    if (state_ != DcfState::Idle) throw std::logic_error("DcfEngine::start_frame: attempt in progress");
    if (counter < 0 || counter > cw_) throw std::invalid_argument("DcfEngine: counter outside [0, cw]");
    counter_ = counter;
    state_ = DcfState::DifsWait;
    return counter_;
  }

  SimTime next_period() const {
    if (state_ == DcfState::DifsWait) return SimTime::from_us(p_.difs_us);
    if (state_ == DcfState::Backoff) return SimTime::from_us(p_.slot_us);
    throw std::logic_error("DcfEngine::next_period: not sensing");
  }

  DcfAction advance(bool channel_idle) {
    switch (state_) {
      case DcfState::DifsWait:
        if (!channel_idle) return DcfAction::Freeze;
        if (counter_ == 0) {
          state_ = DcfState::Tx;
          return DcfAction::TransmitNow;
        }
        state_ = DcfState::Backoff;
        return DcfAction::Wait;
      case DcfState::Backoff:
        if (!channel_idle) {
          state_ = DcfState::DifsWait;
          return DcfAction::Freeze;
        }
        if (--counter_ == 0) {
          state_ = DcfState::Tx;
          return DcfAction::TransmitNow;
        }
        return DcfAction::Decrement;
      case DcfState::Idle:
        throw std::logic_error("DcfEngine::advance: no pending frame");
      case DcfState::Tx:
      case DcfState::AwaitAck:
        throw std::logic_error("DcfEngine::advance: called during transmission");
    }
    return DcfAction::Freeze;
  }

  void on_tx_end() {
    if (state_ != DcfState::Tx) throw std::logic_error("DcfEngine::on_tx_end: not transmitting");
    state_ = DcfState::AwaitAck;
  }

  /// Resolves the outstanding frame. A failure that reaches the retry limit
  /// drops the frame and resets the window.
  FrameResult on_ack(bool acked) {
    if (state_ != DcfState::AwaitAck) throw std::logic_error("DcfEngine::on_ack: no frame awaiting ACK");
    state_ = DcfState::Idle;
    if (acked) {
      cw_ = cw_after(TxEvent::Success, cw_, p_);
      retries_ = 0;
      return FrameResult::Acked;
    }
    if (++retries_ >= p_.retry_limit) {
      cw_ = p_.cw_min;
      retries_ = 0;
      return FrameResult::Dropped;
    }
    cw_ = cw_after(TxEvent::Failure, cw_, p_);
    return FrameResult::Retry;
  }

 private:
  DcfParams p_;
  DcfState state_ = DcfState::Idle;
  int cw_ = 15;
  int counter_ = 0;
  int retries_ = 0;
};

/// Airtime of a data PPDU carrying `bytes` at `rate_bps`.
inline SimTime data_airtime(std::int64_t bytes, double rate_bps, const DcfParams& p) {
  if (!(rate_bps > 0)) throw std::invalid_argument("data_airtime: rate must be positive");
  const double payload_ns = static_cast<double>(bytes) * 8.0 / rate_bps * 1e9;
  return SimTime::from_us(p.phy_header_us) + SimTime{static_cast<std::int64_t>(std::ceil(payload_ns))};
}

/// Largest payload fitting in one PPDU at `rate_bps`.
inline std::int64_t max_payload_bytes(double rate_bps, const DcfParams& p) {
  const double seconds = static_cast<double>(p.max_ppdu_us - p.phy_header_us) * 1e-6;
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(rate_bps * seconds / 8.0)));
}

}  // namespace coexist::wifi
