// Straight-line reference interpreters used to cross-check the MAC engines.
// They are written from the access rules directly and share no code with
// the engines beyond the public types.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coexist/laa_mac.hpp"
#include "coexist/sim_core.hpp"
#include "coexist/wifi_mac.hpp"

namespace testing_oracle {

using coexist::RngStream;
using coexist::laa::HarqFeedback;
using coexist::laa::HarqValue;

// Reference CWS rule for class 3: {15, 31, 63}.
inline int reference_cws(int cws, const std::vector<HarqFeedback>& fb) {
  int counted = 0;
  int negative = 0;
  for (const auto& f : fb) {
    if (f.value == HarqValue::Ack) {
      counted += 1;
    } else if (f.value == HarqValue::Nack) {
      counted += 1;
      negative += 1;
    } else if (f.actually_scheduled && !f.scheduled_on_pcell) {
      counted += 1;
      negative += 1;
    }
  }
  if (counted == 0) return cws;
  const double ratio = static_cast<double>(negative) / static_cast<double>(counted);
  if (ratio >= 0.8) {
    if (cws == 15) return 31;
    return 63;
  }
  return 15;
}

struct CompareResult {
  int mismatches = 0;
  std::int64_t steps = 0;
  bool all_in_set = true;
};

/// Random feedback scripts of 1..30 reference subframes, each with 0..12
/// HARQ entries. NACK-heavy subframes are drawn often enough that every
/// window value is visited.
inline CompareResult compare_cws_sequences(int sequences, std::uint64_t seed) {
  RngStream rng(seed, "cws.oracle");
  CompareResult r;
  const auto cls = coexist::laa::default_priority_class(3);
  for (int s = 0; s < sequences; ++s) {
    coexist::laa::LbtEngine engine(cls);
    int ref = 15;
    const int len = static_cast<int>(rng.uniform_int(1, 30));
    const double nack_bias = rng.uniform01();
    for (int k = 0; k < len; ++k) {
      std::vector<HarqFeedback> fb;
      const int n = static_cast<int>(rng.uniform_int(0, 12));
      for (int i = 0; i < n; ++i) {
        HarqFeedback f;
        const double u = rng.uniform01();
        f.value = u < nack_bias ? HarqValue::Nack : (u < nack_bias + 0.1 ? HarqValue::Dtx : HarqValue::Ack);
        f.actually_scheduled = rng.uniform01() < 0.85;
        f.scheduled_on_pcell = rng.uniform01() < 0.15;
        fb.push_back(f);
      }
      const int got = engine.update_cws(fb);
      ref = reference_cws(ref, fb);
      ++r.steps;
      if (got != ref) ++r.mismatches;
      if (got != 15 && got != 31 && got != 63) r.all_in_set = false;
    }
  }
  return r;
}

// Reference Cat-4 access: defer = one 16 us period plus `defer_slots`
// ECCA slots, all idle; then one idle ECCA slot per counter decrement; any
// busy period returns to a full deferral with the counter held.
struct RefCat4 {
  int counter;
  int defer_slots;
  int defer_done = 0;  // periods of the current deferral already idle
  bool in_backoff = false;

  // 0 keep sensing, 1 decrement, 2 freeze, 3 transmit
  int step(bool idle) {
    if (!idle) {
      in_backoff = false;
      defer_done = 0;
      return 2;
    }
    if (!in_backoff) {
      defer_done += 1;
      if (defer_done < defer_slots + 1) return 0;
      if (counter == 0) return 3;
      in_backoff = true;
      return 0;
    }
    counter -= 1;
    return counter == 0 ? 3 : 1;
  }
};

inline int code_of(coexist::laa::LbtAction a) {
  using coexist::laa::LbtAction;
  switch (a) {
    case LbtAction::KeepSensing: return 0;
    case LbtAction::Decrement: return 1;
    case LbtAction::Freeze: return 2;
    case LbtAction::TransmitNow: return 3;
  }
  return -1;
}

inline CompareResult compare_lbt_traces(int traces, std::uint64_t seed) {
  RngStream rng(seed, "lbt.oracle");
  CompareResult r;
  const auto cls = coexist::laa::default_priority_class(3);
  for (int t = 0; t < traces; ++t) {
    coexist::laa::LbtEngine engine(cls);
    const int counter = static_cast<int>(rng.uniform_int(0, 15));
    engine.start_access_with_counter(counter);
    RefCat4 ref{counter, cls.defer_slots};
    const double p_busy = rng.uniform(0.0, 0.5);
    for (int k = 0; k < 400; ++k) {
      const bool idle = rng.uniform01() >= p_busy;
      const int want = ref.step(idle);
      const int got = code_of(engine.advance(idle));
      ++r.steps;
      if (want != got || engine.counter() != ref.counter) {
        ++r.mismatches;
        break;
      }
      if (want == 3) break;
      if (want == 2) engine.restart_defer();
    }
  }
  return r;
}

// Reference DCF: DIFS must pass idle, then one idle slot per decrement;
// any busy period restarts DIFS with the counter held.
struct RefDcf {
  int counter;
  bool after_difs = false;

  // 0 wait, 1 decrement, 2 freeze, 3 transmit
  int step(bool idle) {
    if (!idle) {
      after_difs = false;
      return 2;
    }
    if (!after_difs) {
      if (counter == 0) return 3;
      after_difs = true;
      return 0;
    }
    counter -= 1;
    return counter == 0 ? 3 : 1;
  }
};

inline int code_of(coexist::wifi::DcfAction a) {
  using coexist::wifi::DcfAction;
  switch (a) {
    case DcfAction::Wait: return 0;
    case DcfAction::Decrement: return 1;
    case DcfAction::Freeze: return 2;
    case DcfAction::TransmitNow: return 3;
  }
  return -1;
}

inline CompareResult compare_dcf_traces(int traces, std::uint64_t seed) {
  RngStream rng(seed, "dcf.oracle");
  CompareResult r;
  for (int t = 0; t < traces; ++t) {
    coexist::wifi::DcfEngine engine;
    const int counter = static_cast<int>(rng.uniform_int(0, 15));
    engine.start_frame_with_counter(counter);
    RefDcf ref{counter};
    const double p_busy = rng.uniform(0.0, 0.5);
    for (int k = 0; k < 400; ++k) {
      const bool idle = rng.uniform01() >= p_busy;
      const int want = ref.step(idle);
      const int got = code_of(engine.advance(idle));
      ++r.steps;
      if (want != got || engine.counter() != ref.counter) {
        ++r.mismatches;
        break;
      }
      if (want == 3) break;
    }
  }
  return r;
}

}  // namespace testing_oracle
