#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "coexist/sim_core.hpp"

using namespace coexist;
using namespace coexist::time_literals;

TEST(EventQueue, ZeroDelayKeepsClock) {
  EventQueue q;
  q.run_until(5_ms);
  const auto id = q.schedule(q.now(), 0, "x", [] {});
  EXPECT_EQ(q.now(), 5_ms);
  EXPECT_EQ(q.pending(), 1u);
  EXPECT_GE(id, 0u);
}

TEST(EventQueue, SimultaneousEventsRunInSchedulingOrder) {
  EventQueue q;
  std::vector<int> order;
  for (int i = 0; i < 5; ++i) q.schedule(1_ms, i, "x", [&order, i] { order.push_back(i); });
  q.run_until(1_s);
  EXPECT_EQ(order, (std::vector<int>{0, 1, 2, 3, 4}));
}

TEST(EventQueue, RejectsPastEvents) {
  EventQueue q;
  q.run_until(1_ms);
  EXPECT_THROW(q.schedule(SimTime{(1_ms).ns - 1}, 0, "x", [] {}), std::invalid_argument);
  EXPECT_THROW(q.run_until(SimTime{0}), std::invalid_argument);
}

TEST(EventQueue, RunUntilCounts) {
  EventQueue empty;
  EXPECT_EQ(empty.run_until(1_s), 0u);
  EXPECT_EQ(empty.now(), 1_s);

  EventQueue q;
  int fired = 0;
  for (auto t : {10_ms, 20_ms, 30_ms, 2_s}) q.schedule(t, 0, "x", [&] { ++fired; });
  EXPECT_EQ(q.run_until(1_s), 3u);
  EXPECT_EQ(fired, 3);
  EXPECT_EQ(q.pending(), 1u);
}

TEST(EventQueue, CancelledEventsDoNotFire) {
  EventQueue q;
  int fired = 0;
  const auto a = q.schedule(1_ms, 0, "x", [&] { ++fired; });
  q.schedule(2_ms, 0, "x", [&] { ++fired; });
  EXPECT_TRUE(q.cancel(a));
  EXPECT_FALSE(q.cancel(a));
  EXPECT_EQ(q.pending(), 1u);
  EXPECT_EQ(q.run_until(1_s), 1u);
  EXPECT_EQ(fired, 1);
  EXPECT_FALSE(q.cancel(12345));
}

TEST(EventQueue, ActionsMayScheduleAtNow) {
  EventQueue q;
  std::vector<int> order;
  q.schedule(1_ms, 0, "a", [&] {
    order.push_back(0);
    q.schedule(q.now(), 0, "b", [&] { order.push_back(2); });
  });
  q.schedule(1_ms, 0, "c", [&] { order.push_back(1); });
  q.run_until(1_ms);
  EXPECT_EQ(order, (std::vector<int>{0, 1, 2}));
}

namespace {
std::vector<std::pair<std::int64_t, std::uint64_t>> random_trace(std::uint64_t seed) {
  EventQueue q;
  RngStream rng(seed, "trace");
  std::vector<std::pair<std::int64_t, std::uint64_t>> log;
  q.set_observer([&](const DispatchRecord& r) { log.emplace_back(r.fire_at.ns, r.seq); });
  std::function<void()> spawn = [&] {
    if (log.size() > 2000) return;
    const int n = static_cast<int>(rng.uniform_int(0, 2));
    for (int i = 0; i < n; ++i) q.schedule_in(SimTime{rng.uniform_int(0, 1000)}, 0, "s", spawn);
  };
  for (int i = 0; i < 10; ++i) q.schedule(SimTime{rng.uniform_int(0, 100)}, 0, "s", spawn);
  q.run_until(1_s);
  return log;
}
}  // namespace

TEST(EventQueue, SameSeedSameDispatchTrace) {
  const auto a = random_trace(42);
  const auto b = random_trace(42);
  ASSERT_FALSE(a.empty());
  EXPECT_EQ(a, b);
  EXPECT_NE(a, random_trace(43));
  for (std::size_t i = 1; i < a.size(); ++i) EXPECT_LE(a[i - 1].first, a[i].first);
}

TEST(Rng, DegenerateRange) {
  RngStream s(7, "x");
  for (int i = 0; i < 100; ++i) EXPECT_EQ(s.uniform_int(5, 5), 5);
  EXPECT_THROW(s.uniform_int(6, 5), std::invalid_argument);
}

TEST(Rng, UniformIntFrequenciesWithinFiveSigma) {
  RngStream s(2024, "uniform");
  constexpr int kDraws = 1'000'000;
  std::vector<int> hist(16, 0);
  for (int i = 0; i < kDraws; ++i) ++hist[static_cast<std::size_t>(s.uniform_int(0, 15))];
  const double p = 1.0 / 16.0;
  const double sigma = std::sqrt(kDraws * p * (1 - p));
  double chi2 = 0;
  for (int c : hist) {
    EXPECT_LE(std::abs(c - kDraws * p), 5 * sigma);
    chi2 += (c - kDraws * p) * (c - kDraws * p) / (kDraws * p);
  }
  // 15 degrees of freedom; 0.9999 quantile is about 44.3.
  EXPECT_LT(chi2, 44.3);
}

TEST(Rng, StreamsAreReproducibleAndIndependent) {
  RngStream a(99, "dcf.backoff.node3"), b(99, "dcf.backoff.node3"), c(99, "dcf.backoff.node4"), d(100, "dcf.backoff.node3");
  bool differs_c = false, differs_d = false;
  for (int i = 0; i < 64; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs_c |= x != c.next_u64();
    differs_d |= x != d.next_u64();
  }
  EXPECT_TRUE(differs_c);
  EXPECT_TRUE(differs_d);
}

TEST(Rng, ExponentialMeanAndUnitInterval) {
  RngStream s(5, "exp");
  double sum = 0;
  constexpr int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = s.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += s.exponential(4.0);
  }
  // mean 0.25, sd of the mean 0.25/sqrt(n)
  EXPECT_NEAR(sum / n, 0.25, 5 * 0.25 / std::sqrt(double(n)));
  EXPECT_THROW(s.exponential(0.0), std::invalid_argument);
}

TEST(SimTime, UnitConversions) {
  EXPECT_EQ(SimTime::from_us(9).ns, 9000);
  EXPECT_EQ((1_ms).ns, 1'000'000);
  EXPECT_DOUBLE_EQ((1500_us).ms(), 1.5);
  EXPECT_LT(1_us, 1_ms);
}
