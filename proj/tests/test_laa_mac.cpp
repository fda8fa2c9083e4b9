#include <gtest/gtest.h>

#include <vector>

#include "coexist/laa_mac.hpp"
#include "oracles.hpp"

using namespace coexist;
using namespace coexist::laa;
using namespace coexist::time_literals;

namespace {

std::vector<HarqFeedback> feedback(int acks, int nacks) {
  std::vector<HarqFeedback> v;
  for (int i = 0; i < acks; ++i) v.push_back({1, 0, HarqValue::Ack});
  for (int i = 0; i < nacks; ++i) v.push_back({1, 0, HarqValue::Nack});
  return v;
}

}  // namespace

TEST(EdThreshold, SharedBandExamples) {
  EXPECT_NEAR(ed_threshold_dbm({23.0, 23.0, 20.0, true, std::nullopt}), -72.0, 0.05);
  EXPECT_NEAR(ed_threshold_dbm({23.0, 18.0, 20.0, true, std::nullopt}), -66.99, 0.05);
  EXPECT_NEAR(ed_threshold_dbm({23.0, 33.0, 20.0, true, std::nullopt}), -72.0, 0.05);
  EXPECT_NEAR(ed_threshold_tmax_dbm(20.0), -61.99, 0.01);
}

TEST(EdThreshold, ExclusiveBandAndErrors) {
  EXPECT_NEAR(ed_threshold_dbm({23.0, 23.0, 20.0, false, std::nullopt}), ed_threshold_tmax_dbm(20.0), 1e-12);
  EXPECT_DOUBLE_EQ(ed_threshold_dbm({23.0, 23.0, 20.0, false, -70.0}), -70.0);
  EXPECT_THROW(ed_threshold_dbm({23.0, 23.0, 0.0, true, std::nullopt}), std::invalid_argument);
}

TEST(Cws, ExamplesFromTheRule) {
  const auto cls = default_priority_class(3);
  EXPECT_EQ(cws_update(feedback(2, 8), cls, 15), 31);
  EXPECT_EQ(cws_update(feedback(3, 7), cls, 31), 15);
  EXPECT_EQ(cws_update(feedback(0, 10), cls, 63), 63);
  std::vector<HarqFeedback> unscheduled{{1, 0, HarqValue::Dtx, false, false}};
  EXPECT_EQ(cws_update(unscheduled, cls, 15), 15);
  EXPECT_EQ(cws_update(unscheduled, cls, 31), 31);
  EXPECT_THROW(cws_update(feedback(1, 0), cls, 16), std::invalid_argument);
}

TEST(Cws, DtxHandling) {
  const auto cls = default_priority_class(3);
  std::vector<HarqFeedback> dtx(5, HarqFeedback{1, 0, HarqValue::Dtx});
  EXPECT_EQ(cws_update(dtx, cls, 15), 31);  // DTX counts as NACK
  for (auto& f : dtx) f.scheduled_on_pcell = true;
  EXPECT_EQ(cws_update(dtx, cls, 15), 15);  // PCell-scheduled DTX is ignored
}

TEST(Cws, MatchesReferenceInterpreterOnRandomSequences) {
  const auto r = testing_oracle::compare_cws_sequences(10000, 31337);
  EXPECT_EQ(r.mismatches, 0);
  EXPECT_TRUE(r.all_in_set);
  EXPECT_GT(r.steps, 10000);
}

TEST(Mcot, Classes) {
  EXPECT_EQ(mcot_us(default_priority_class(3), false), 8000);
  EXPECT_EQ(mcot_us(default_priority_class(3), true), 10000);
  EXPECT_EQ(mcot_us(default_priority_class(4), false), 8000);
  EXPECT_THROW(default_priority_class(1), std::invalid_argument);
  EXPECT_THROW(default_priority_class(2), std::invalid_argument);
}

TEST(Lbt, TerminalDecrementTransmits) {
  LbtEngine e(default_priority_class(3));
  e.start_access_with_counter(1);
  // 16 us then 3 ECCA slots of deferral
  EXPECT_EQ(e.next_period(), 16_us);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(e.advance(true), LbtAction::KeepSensing);
  EXPECT_EQ(e.advance(true), LbtAction::KeepSensing);
  EXPECT_EQ(e.state(), LbtState::Backoff);
  EXPECT_EQ(e.next_period(), 9_us);
  EXPECT_EQ(e.advance(true), LbtAction::TransmitNow);
  EXPECT_EQ(e.counter(), 0);
}

TEST(Lbt, BusySlotFreezesCounter) {
  LbtEngine e(default_priority_class(3));
  e.start_access_with_counter(5);
  for (int i = 0; i < 4; ++i) e.advance(true);
  ASSERT_EQ(e.state(), LbtState::Backoff);
  EXPECT_EQ(e.advance(false), LbtAction::Freeze);
  EXPECT_EQ(e.counter(), 5);
  EXPECT_EQ(e.state(), LbtState::Deferring);
  e.restart_defer();
  EXPECT_EQ(e.next_period(), 16_us);
}

TEST(Lbt, ZeroCounterStillDefers) {
  LbtEngine e(default_priority_class(3));
  e.start_access_with_counter(0);
  EXPECT_EQ(e.advance(true), LbtAction::KeepSensing);
  EXPECT_EQ(e.advance(true), LbtAction::KeepSensing);
  EXPECT_EQ(e.advance(false), LbtAction::Freeze);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(e.advance(true), LbtAction::KeepSensing);
  EXPECT_EQ(e.advance(true), LbtAction::TransmitNow);
}

TEST(Lbt, CounterDrawWithinWindow) {
  RngStream rng(1, "laa.backoff.node0");
  std::vector<int> seen(16, 0);
  for (int i = 0; i < 5000; ++i) {
    LbtEngine e(default_priority_class(3));
    const int c = e.start_access(rng);
    ASSERT_GE(c, 0);
    ASSERT_LE(c, 15);
    ++seen[static_cast<std::size_t>(c)];
  }
  for (int n : seen) EXPECT_GT(n, 0);
}

TEST(Lbt, MisuseThrows) {
  LbtEngine e(default_priority_class(3));
  EXPECT_THROW(e.advance(true), std::logic_error);
  EXPECT_THROW(e.start_access_with_counter(16), std::invalid_argument);
  e.start_access_with_counter(3);
  EXPECT_THROW(e.start_access_with_counter(3), std::logic_error);
  EXPECT_THROW(LbtEngine(default_priority_class(3), 0, 8), std::invalid_argument);
}

TEST(Lbt, MatchesReferenceOnScriptedTraces) {
  const auto r = testing_oracle::compare_lbt_traces(2000, 99);
  EXPECT_EQ(r.mismatches, 0);
  EXPECT_GT(r.steps, 10000);
}

TEST(Drs, PermissionWindow) {
  DrsConfig cfg;
  EXPECT_TRUE(drs_permitted(2_ms, cfg, 2_ms - 25_us));
  EXPECT_FALSE(drs_permitted(2_ms, cfg, 2_ms - 20_us));
  EXPECT_FALSE(drs_permitted(10_ms, cfg, 9_ms));
  EXPECT_TRUE(in_dmtc_window(40_ms, cfg));
  EXPECT_TRUE(in_dmtc_window(SimTime{(46_ms).ns - 1}, cfg));
  EXPECT_FALSE(in_dmtc_window(46_ms, cfg));
  cfg.dmtc_period_ms = 50;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(PartialSubframe, GrantAtSubframeBoundary) {
  const auto p = partial_subframe_plan(3_ms, 8000);
  ASSERT_EQ(p.segments.size(), 8u);
  for (const auto& s : p.segments) EXPECT_EQ(s.symbol_count, 14);
  EXPECT_EQ(p.end(), 11_ms);
  EXPECT_EQ(p.reservation(), SimTime{});
}

TEST(PartialSubframe, GrantAtSecondSlot) {
  const auto p = partial_subframe_plan(3500_us, 8000);
  ASSERT_EQ(p.segments.size(), 9u);
  EXPECT_EQ(p.segments.front().start_symbol, 7);
  EXPECT_EQ(p.segments.front().symbol_count, 7);
  for (std::size_t i = 1; i + 1 < p.segments.size(); ++i) EXPECT_EQ(p.segments[i].symbol_count, 14);
  EXPECT_EQ(p.segments.back().symbol_count, 6);
  EXPECT_LE(p.data_airtime().ns, (8000_us).ns);
}

TEST(PartialSubframe, ReservationToNextSlot) {
  const auto p = partial_subframe_plan(3200_us, 8000);
  EXPECT_EQ(p.data_start, 3500_us);
  EXPECT_EQ(p.reservation(), 300_us);
}

TEST(PartialSubframe, ExactFullSubframeEnding) {
  const auto p = partial_subframe_plan(0_ms, 3000);
  ASSERT_EQ(p.segments.size(), 3u);
  EXPECT_EQ(p.segments.back().symbol_count, 14);
}

TEST(PartialSubframe, EndingsAlwaysAllowedAndWithinBudget) {
  RngStream rng(4, "plans");
  for (int i = 0; i < 2000; ++i) {
    const SimTime grant{rng.uniform_int(0, 100'000'000)};
    const std::int64_t budget = rng.uniform_int(300, 10000);
    const auto p = partial_subframe_plan(grant, budget);
    if (p.segments.empty()) continue;
    EXPECT_TRUE(is_valid_ending(p.segments.back().symbol_count));
    EXPECT_LE(p.data_airtime().ns, budget * 1000);
    EXPECT_EQ(p.data_start.ns % kSlotNs, 0);
  }
}

TEST(PartialSubframe, Truncate) {
  auto p = partial_subframe_plan(0_ms, 8000);
  EXPECT_EQ(truncate_plan(p, 2, 4), 6);
  EXPECT_EQ(p.segments.size(), 3u);
  EXPECT_EQ(p.segments.back().symbol_count, 6);
}

TEST(JapanGap, Check) {
  EXPECT_EQ(japan_gap_check(4000, true), 34);
  EXPECT_EQ(japan_gap_check(3999, true), 0);
  EXPECT_EQ(japan_gap_check(4000, false), 0);
  for (std::int64_t t = 1; t < 4000; ++t) ASSERT_EQ(japan_gap_check(t, true), 0);
  EXPECT_EQ(japan_gap_check(8000, true), 34);
}

TEST(Multicarrier, ModeA) {
  std::vector<CarrierView> c(2);
  c[0] = {0, true, true, 1_ms, false, false};
  c[1] = {1, false, false, {}, true, false};
  EXPECT_EQ(multicarrier_lbt(MulticarrierMode::A, c), (std::vector<int>{0, 1}));
  c[0].backoff_complete = false;
  EXPECT_TRUE(multicarrier_lbt(MulticarrierMode::A, c).empty());
  c[0].designated = false;
  EXPECT_THROW(multicarrier_lbt(MulticarrierMode::A, c), std::invalid_argument);
}

TEST(Multicarrier, ModeBAlignment) {
  std::vector<CarrierView> c(2);
  c[0] = {0, false, true, 1_ms, false, true};
  c[1] = {1, false, true, 2_ms, false, true};
  EXPECT_EQ(multicarrier_lbt(MulticarrierMode::B, c, 2_ms), (std::vector<int>{0, 1}));
  EXPECT_EQ(multicarrier_lbt(MulticarrierMode::B, c, 1500_us), (std::vector<int>{0}));
  c[1].idle_before_alignment = false;
  EXPECT_EQ(multicarrier_lbt(MulticarrierMode::B, c, 2_ms), (std::vector<int>{0}));
}
