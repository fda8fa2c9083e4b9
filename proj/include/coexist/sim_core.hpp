// Discrete-event kernel: integer-nanosecond clock, ordered event queue and
// labelled deterministic random substreams.
#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace coexist {

/// Virtual time in integer nanoseconds since simulation start.
struct SimTime {
  std::int64_t ns = 0;

  constexpr SimTime() = default;
  constexpr explicit SimTime(std::int64_t n) : ns(n) {}

  static constexpr SimTime from_us(std::int64_t us) { return SimTime{us * 1000}; }
  static constexpr SimTime from_ms(std::int64_t ms) { return SimTime{ms * 1000000}; }
  static constexpr SimTime from_s(std::int64_t s) { return SimTime{s * 1000000000}; }
  static constexpr SimTime max() { return SimTime{std::numeric_limits<std::int64_t>::max()}; }

  constexpr double us() const { return static_cast<double>(ns) / 1e3; }
  constexpr double ms() const { return static_cast<double>(ns) / 1e6; }
  constexpr double seconds() const { return static_cast<double>(ns) / 1e9; }

  constexpr auto operator<=>(const SimTime&) const = default;
  constexpr SimTime operator+(SimTime o) const { return SimTime{ns + o.ns}; }
  constexpr SimTime operator-(SimTime o) const { return SimTime{ns - o.ns}; }
  constexpr SimTime& operator+=(SimTime o) {
    ns += o.ns;
    return *this;
  }
  constexpr SimTime& operator-=(SimTime o) {
    ns -= o.ns;
    return *this;
  }
};

namespace time_literals {
constexpr SimTime operator""_ns(unsigned long long v) { return SimTime{static_cast<std::int64_t>(v)}; }
constexpr SimTime operator""_us(unsigned long long v) { return SimTime::from_us(static_cast<std::int64_t>(v)); }
constexpr SimTime operator""_ms(unsigned long long v) { return SimTime::from_ms(static_cast<std::int64_t>(v)); }
constexpr SimTime operator""_s(unsigned long long v) { return SimTime::from_s(static_cast<std::int64_t>(v)); }
}  // namespace time_literals

using EventId = std::uint64_t;

/// Lightweight record of a dispatched event, used for trace comparison.
struct DispatchRecord {
  SimTime fire_at;
  std::uint64_t seq;
  int target;
  std::string_view kind;
};

/// Ordered event store. Events dispatch in (fire_at, seq) order; seq is the
/// scheduling ordinal, so simultaneous events run in scheduling order.
class EventQueue {
 public:
  using Action = std::function<void()>;
  using Observer = std::function<void(const DispatchRecord&)>;

  SimTime now() const { return now_; }
  std::size_t pending() const { return heap_.size() - cancelled_pending_; }

  /// `kind` must outlive the queue (string literals in practice).
  EventId schedule(SimTime fire_at, int target, std::string_view kind, Action action) {
    if (fire_at < now_) {
      throw std::invalid_argument("EventQueue::schedule: fire_at " + std::to_string(fire_at.ns) +
                                  " ns is before current clock " + std::to_string(now_.ns) + " ns");
    }
    const EventId id = next_seq_++;
    heap_.push_back(Entry{fire_at, id, target, kind, std::move(action)});
    std::push_heap(heap_.begin(), heap_.end(), later);
    finished_.push_back(false);
    return id;
  }

  EventId schedule_in(SimTime delay, int target, std::string_view kind, Action action) {
    return schedule(now_ + delay, target, kind, std::move(action));
  }

  /// Returns false if the id is unknown or already dispatched/cancelled.
  bool cancel(EventId id) {
    if (id >= finished_.size() || finished_[id]) return false;
    finished_[id] = true;
    ++cancelled_pending_;
    return true;
  }

  void set_observer(Observer obs) { observer_ = std::move(obs); }

  /// Dispatches every event with fire_at <= t_end, then advances the clock to t_end.
  std::uint64_t run_until(SimTime t_end) {
    if (t_end < now_) throw std::invalid_argument("EventQueue::run_until: t_end is in the past");
    std::uint64_t count = 0;
    while (!heap_.empty() && heap_.front().fire_at <= t_end) {
      std::pop_heap(heap_.begin(), heap_.end(), later);
      Entry e = std::move(heap_.back());
      heap_.pop_back();
      if (finished_[e.seq]) {
        --cancelled_pending_;
        continue;
      }
      finished_[e.seq] = true;
      now_ = e.fire_at;
      if (observer_) observer_(DispatchRecord{e.fire_at, e.seq, e.target, e.kind});
      ++count;
      e.action();
    }
    now_ = t_end;
    return count;
  }

 private:
  struct Entry {
    SimTime fire_at;
    std::uint64_t seq;
    int target;
    std::string_view kind;
    Action action;
  };

  static bool later(const Entry& a, const Entry& b) {
    return a.fire_at != b.fire_at ? a.fire_at > b.fire_at : a.seq > b.seq;
  }

  SimTime now_{};
  std::uint64_t next_seq_ = 0;
  std::size_t cancelled_pending_ = 0;
  std::vector<Entry> heap_;
  std::vector<bool> finished_;  // one bit per issued id: dispatched or cancelled
  Observer observer_;
};

namespace detail {
// FNV-1a, 64 bit.
constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

/// Deterministic random substream keyed by (master_seed, label).
///
/// The engine is std::mt19937_64 (fully specified by the standard); the
/// distributions are implemented here because the standard library's
/// distributions are implementation-defined and would break cross-platform
/// reproducibility.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::string label)
      : label_(std::move(label)),
        engine_(detail::splitmix64(master_seed ^ detail::splitmix64(detail::fnv1a(label_)))) {}

  const std::string& label() const { return label_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [lo, hi], unbiased (rejection sampling).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) throw std::invalid_argument("uniform_int: lo > hi");
    const std::uint64_t span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo);
    if (span == std::numeric_limits<std::uint64_t>::max()) return static_cast<std::int64_t>(engine_());
    const std::uint64_t range = span + 1;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % range;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return lo + static_cast<std::int64_t>(v % range);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  double exponential(double rate) {
    if (!(rate > 0.0)) throw std::invalid_argument("exponential: rate must be positive");
    return -std::log1p(-uniform01()) / rate;
  }

  /// Box-Muller; one draw per call keeps the stream position independent of history.
  double normal(double mean, double sigma) {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return mean + sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::string label_;
  std::mt19937_64 engine_;
};

}  // namespace coexist
