#include <gtest/gtest.h>

#include <cmath>

#include "coexist/medium.hpp"

using namespace coexist;
using namespace coexist::time_literals;

namespace {

ChannelModel no_shadow() {
  ChannelModel m;
  m.shadowing_sigma_db = 0.0;
  return m;
}

NodePosition at(int id, double x, double y = 0.0, int op = 1) { return {x, y, id, op, NodeKind::WifiAp}; }

double lin_sum_dbm(std::initializer_list<double> dbm) {
  double mw = 0;
  for (double v : dbm) mw += std::pow(10.0, v / 10.0);
  return 10.0 * std::log10(mw);
}

}  // namespace

TEST(Pathloss, ReferenceAtOneMetre) {
  const auto m = no_shadow();
  EXPECT_DOUBLE_EQ(pathloss_db(m, at(0, 0), at(1, 1)), 46.4);
}

TEST(Pathloss, TenMetres) {
  const auto m = no_shadow();
  // 46.4 + 10 * 3 * log10(10)
  EXPECT_NEAR(pathloss_db(m, at(0, 0), at(1, 6, 8)), 76.4, 1e-12);
}

TEST(Pathloss, Symmetric) {
  ChannelModel m;
  Medium med(m, {at(0, 0), at(1, 13, 7), at(2, 40, 2)}, 77);
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      if (a != b) {
        EXPECT_DOUBLE_EQ(med.pathloss_db(a, b), med.pathloss_db(b, a));
      }
    }
  }
  EXPECT_DOUBLE_EQ(pathloss_db(m, at(0, 0), at(1, 3, 4), 2.5), pathloss_db(m, at(1, 3, 4), at(0, 0), 2.5));
}

TEST(Pathloss, ShadowingIsFrozenPerLink) {
  EXPECT_EQ(link_shadowing_db(5, 1, 2, 6.0), link_shadowing_db(5, 2, 1, 6.0));
  EXPECT_NE(link_shadowing_db(5, 1, 2, 6.0), link_shadowing_db(6, 1, 2, 6.0));
  EXPECT_EQ(link_shadowing_db(5, 1, 2, 0.0), 0.0);
}

TEST(Energy, NoiseFloor) {
  Medium med(no_shadow(), {at(0, 0), at(1, 10)}, 1);
  const double expected = -174.0 + 10.0 * std::log10(20e6) + 9.0;
  EXPECT_NEAR(med.sensed_energy_dbm(1, 0_ms), expected, 1e-9);
  EXPECT_NEAR(expected, -91.99, 0.01);
}

TEST(Energy, SingleTransmitter) {
  // 23 dBm over 80 dB of loss: place the nodes so that 46.4 + 30 log10(d) = 80.
  const double d = std::pow(10.0, (80.0 - 46.4) / 30.0);
  Medium med(no_shadow(), {at(0, 0), at(1, d)}, 1);
  med.add({0, 0, 0_ms, 1_ms, 23.0});
  const double got = med.sensed_energy_dbm(1, 500_us);
  EXPECT_NEAR(got, lin_sum_dbm({-57.0, med.noise_dbm()}), 1e-9);
  EXPECT_NEAR(got, -57.0, 0.01);
  EXPECT_NEAR(med.sensed_energy_dbm(1, 1_ms), med.noise_dbm(), 1e-9);  // half-open interval
}

TEST(Energy, TwoEqualArrivalsAddThreeDb) {
  // listener between two transmitters at equal distance
  const double d = std::pow(10.0, (83.0 - 46.4) / 30.0);  // 23 dBm - 83 dB = -60 dBm
  Medium med(no_shadow(), {at(0, -d), at(1, d), at(2, 0)}, 1);
  med.add({0, 0, 0_ms, 1_ms, 23.0});
  med.add({0, 1, 0_ms, 1_ms, 23.0});
  EXPECT_NEAR(med.sensed_energy_dbm(2, 100_us), lin_sum_dbm({-60.0, -60.0, med.noise_dbm()}), 1e-9);
  EXPECT_NEAR(med.sensed_energy_dbm(2, 100_us), -56.99, 0.01);
  EXPECT_NEAR(med.sensed_energy_dbm(2, 100_us, 1), lin_sum_dbm({-60.0, med.noise_dbm()}), 1e-9);
}

TEST(Sinr, NoInterfererEqualsSnr) {
  Medium med(no_shadow(), {at(0, 0), at(1, 20)}, 1);
  const auto id = med.add({0, 0, 0_ms, 1_ms, 23.0});
  EXPECT_NEAR(med.sinr_db(1, id, 10_us), med.snr_db(0, 23.0, 1), 1e-12);
}

TEST(Sinr, EqualInterfererNearZero) {
  Medium med(no_shadow(), {at(0, -10), at(1, 10), at(2, 0)}, 1);
  const auto w = med.add({0, 0, 0_ms, 1_ms, 23.0});
  med.add({0, 1, 0_ms, 1_ms, 23.0});
  EXPECT_NEAR(med.sinr_db(2, w, 10_us), 0.0, 0.01);
}

TEST(Sinr, LinearDomainArithmetic) {
  // wanted -60, interferer -70, noise -91.99; the exact value is 9.973 dB.
  const double dw = std::pow(10.0, (83.0 - 46.4) / 30.0);
  const double di = std::pow(10.0, (93.0 - 46.4) / 30.0);
  Medium med(no_shadow(), {at(0, -dw), at(1, di), at(2, 0)}, 1);
  const auto w = med.add({0, 0, 0_ms, 1_ms, 23.0});
  med.add({0, 1, 0_ms, 1_ms, 23.0});
  const double n = std::pow(10.0, med.noise_dbm() / 10.0);
  const double expected = 10.0 * std::log10(1e-6 / (1e-7 + n));
  EXPECT_NEAR(med.sinr_db(2, w, 1_us), expected, 1e-9);
  EXPECT_NEAR(med.sinr_db(2, w, 1_us), 9.96, 0.02);
}

TEST(Reception, MinSinrRule) {
  Medium med(no_shadow(), {at(0, -10), at(1, 10), at(2, 0), at(3, 12)}, 1);
  const auto w = med.add({0, 0, 0_ms, 1_ms, 23.0});
  EXPECT_EQ(med.reception_outcome(w, 2, 10.0), Reception::Decoded);
  // interferer covers only the last 10 % of the frame
  med.add({0, 1, 900_us, 2_ms, 23.0});
  EXPECT_NEAR(med.min_sinr_db(2, w, 0_ms, 1_ms), 0.0, 0.01);
  EXPECT_EQ(med.reception_outcome(w, 2, 10.0), Reception::Failed);
  EXPECT_EQ(med.reception_outcome(w, 2, 10.0, 0_ms, 900_us), Reception::Decoded);
}

TEST(Reception, HalfDuplex) {
  Medium med(no_shadow(), {at(0, 0), at(1, 5)}, 1);
  const auto w = med.add({0, 0, 0_ms, 1_ms, 23.0});
  med.add({0, 1, 500_us, 600_us, 18.0, 0, BurstKind::Ack});
  EXPECT_EQ(med.reception_outcome(w, 1, -100.0), Reception::Failed);
}

TEST(Rate, Shannon) {
  EXPECT_EQ(rate_bps(-INFINITY, Technology::LAA), 0.0);
  RateModel uncapped;
  uncapped.cap_laa_bps = 1e12;
  EXPECT_NEAR(rate_bps(20.0, Technology::LAA, uncapped), 20e6 * 0.75 * std::log2(101.0), 1e-3);
  EXPECT_NEAR(rate_bps(20.0, Technology::LAA, uncapped) / 1e6, 100.0, 0.2);
  for (double s = -10; s <= 40; s += 0.5) EXPECT_GE(rate_bps(s, Technology::LAA), rate_bps(s, Technology::WiFi));
  EXPECT_DOUBLE_EQ(rate_bps(60.0, Technology::WiFi), 86.7e6);
}

TEST(Rate, ThresholdInvertsRate) {
  for (double s : {-3.0, 0.0, 5.0, 12.0}) {
    const double r = rate_bps(s, Technology::WiFi);
    EXPECT_NEAR(sinr_for_rate_db(r, Technology::WiFi), s, 1e-9);
    EXPECT_NEAR(decode_threshold_db(r, Technology::WiFi), s - 3.0, 1e-9);
  }
}

TEST(MediumBookkeeping, PruneAndTruncate) {
  Medium med(no_shadow(), {at(0, 0), at(1, 5)}, 1);
  const auto a = med.add({0, 0, 0_ms, 1_ms, 23.0});
  med.add({0, 1, 2_ms, 3_ms, 23.0});
  med.truncate(a, 500_us);
  EXPECT_EQ(med.find(a)->end, 500_us);
  EXPECT_TRUE(med.transmitting(0, 400_us, 600_us));
  EXPECT_FALSE(med.transmitting(0, 500_us, 600_us));
  EXPECT_EQ(med.last_end_in(-1, 0_ms, 4_ms), 3_ms);
  med.prune_before(1_ms);
  EXPECT_EQ(med.find(a), nullptr);
  EXPECT_THROW(Medium(no_shadow(), {at(1, 0)}, 1), std::invalid_argument);
}
