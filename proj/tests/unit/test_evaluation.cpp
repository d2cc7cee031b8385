#include <gtest/gtest.h>

#include <cmath>

#include "microflow/eval/daily_head.hpp"
#include "microflow/eval/execution.hpp"
#include "microflow/util/rng.hpp"

using namespace microflow;
using namespace microflow::eval;

namespace {

std::vector<DailySample> linear_panel(std::size_t days, std::size_t instruments, std::size_t width, Rng& rng,
                                      double noise, std::size_t day_offset = 0) {
  std::vector<double> beta(width);
  Rng coef(99);
  for (auto& b : beta) b = coef.normal();
  std::vector<DailySample> out;
  for (std::size_t d = 0; d < days; ++d) {
    for (std::size_t i = 0; i < instruments; ++i) {
      DailySample s{"I" + std::to_string(i), d + day_offset, std::vector<double>(width), 0.0};
      for (std::size_t j = 0; j < width; ++j) {
        s.x[j] = rng.normal(j, 1.0 + j);
        s.y += beta[j] * s.x[j];
      }
      s.y = noise > 0.0 ? rng.normal(0.0, noise) : s.y;
      out.push_back(std::move(s));
    }
  }
  return out;
}

MinutePrices prices_from(const std::vector<double>& px, double day_vwap) {
  MinutePrices p;
  p.vwap = px;
  p.has_price.assign(px.size(), 1);
  p.day_vwap = day_vwap;
  return p;
}

}  // namespace

TEST(DailyLabel, NextDayReturn) {
  const std::vector<double> closes{10.0, 11.0, 12.1, 12.1};
  EXPECT_NEAR(*daily_label(closes, 0), 0.1, 1e-15);
  EXPECT_EQ(*daily_label(closes, 1), 0.0);
  EXPECT_FALSE(daily_label(closes, 2).has_value());
  const std::vector<double> bad{10.0, 0.0, 1.0};
  EXPECT_THROW(daily_label(bad, 0), ConfigError);
}

TEST(DailyBar, FromTransactions) {
  std::vector<Transaction> z{{1000000, 2, 1}, {1020000, -1, 2}, {990000, 1, 3}, {1010000, -4, 4}};
  auto b = daily_bar(z);
  EXPECT_EQ(b.open, 100.0);
  EXPECT_EQ(b.high, 102.0);
  EXPECT_EQ(b.low, 99.0);
  EXPECT_EQ(b.close, 101.0);
  EXPECT_EQ(b.volume, 8.0);
  EXPECT_NEAR(b.vwap, (200.0 + 102.0 + 99.0 + 404.0) / 8.0, 1e-12);
  auto s = daily_statistics(b);
  EXPECT_NEAR(s[0], 0.01, 1e-15);
  EXPECT_NEAR(s[4], std::log(9.0), 1e-15);
  EXPECT_NEAR(s[5], std::log(5.0), 1e-15);
  EXPECT_THROW(daily_bar({}), ConfigError);
}

TEST(PoolRows, MeanMaxMin) {
  auto p = pool_rows({{1.0, -2.0}, {3.0, 4.0}}, 2);
  EXPECT_EQ(p, (std::vector<double>{2.0, 1.0, 3.0, 4.0, 1.0, -2.0}));
  EXPECT_EQ(pool_rows({}, 2), std::vector<double>(6, 0.0));
}

TEST(Ridge, RealizableTargetGivesUnitIc) {
  Rng rng(1);
  auto train = linear_panel(40, 8, 5, rng, 0.0);
  auto test = linear_panel(20, 8, 5, rng, 0.0, 40);
  const std::array<double, 1> alpha{1e-10};
  auto res = fit_daily_head(train, {}, test, alpha);
  EXPECT_NEAR(res.test.ic, 1.0, 1e-6);
  EXPECT_NEAR(res.test.rank_ic, 1.0, 1e-6);
  EXPECT_EQ(res.test.daily_ic.size(), 20u);
}

TEST(Ridge, PureNoiseStaysNearZero) {
  Rng rng(2);
  auto train = linear_panel(100, 10, 6, rng, 1.0);
  auto valid = linear_panel(10, 10, 6, rng, 1.0, 100);
  auto test = linear_panel(100, 10, 6, rng, 1.0, 110);
  auto res = fit_daily_head(train, valid, test);
  EXPECT_LT(std::fabs(res.test.ic), 0.2);
  EXPECT_LT(std::fabs(res.test.rank_ic), 0.2);
}

TEST(Ridge, DeterministicAndShrinks) {
  Rng a(3), b(3);
  auto pa_ = linear_panel(30, 6, 4, a, 0.5);
  auto pb = linear_panel(30, 6, 4, b, 0.5);
  auto m1 = fit_ridge(pa_, 0.1), m2 = fit_ridge(pb, 0.1);
  EXPECT_EQ(m1.coef, m2.coef);
  auto heavy = fit_ridge(pa_, 1e6);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_LT(std::fabs(heavy.coef[j]), std::fabs(m1.coef[j]) + 1e-9);
}

TEST(Ridge, SingularMatrixRaisesAlphaAndWarns) {
  Rng rng(4);
  auto train = linear_panel(20, 5, 2, rng, 0.0);
  for (auto& s : train) s.x.push_back(s.x[0]);  // duplicate column
  std::vector<std::string> warnings;
  auto m = fit_ridge(train, 0.0, [&](const std::string& w) { warnings.push_back(w); });
  EXPECT_FALSE(warnings.empty());
  EXPECT_GT(m.alpha, 0.0);
  EXPECT_NEAR(m.coef[0], m.coef[2], 1e-9);
}

TEST(Execution, ConstantPricesGiveZeroPa) {
  auto p = prices_from(std::vector<double>(30, 50.0), 50.0);
  Rng rng(5);
  std::vector<double> sig(30);
  for (auto& s : sig) s = rng.uniform();
  std::vector<ExecutionRecord> r{threshold_execution(sig, p).record, twap_execution(p).record};
  EXPECT_EQ(pa(r), 0.0);
}

TEST(Execution, FactorMarkingHighPricesBeatsTwap) {
  std::vector<double> px(20), sig(20);
  for (std::size_t m = 0; m < 20; ++m) {
    px[m] = 100.0 + std::sin(static_cast<double>(m));
    sig[m] = px[m];
  }
  auto p = prices_from(px, 100.0);
  const std::vector<ExecutionRecord> policy{threshold_execution(sig, p).record};
  const std::vector<ExecutionRecord> twap{twap_execution(p).record};
  EXPECT_GT(pa(policy), pa(twap));
}

TEST(Execution, UniformSignalFallsBackToTwap) {
  auto p = prices_from({10.0, 11.0, 12.0, 13.0}, 11.5);
  auto out = threshold_execution(std::vector<double>(4, 0.3), p);
  EXPECT_TRUE(out.fallback);
  EXPECT_EQ(out.record.strategy_price, twap_execution(p).record.strategy_price);
  EXPECT_EQ(out.record.strategy_price, 11.5);
}

TEST(Execution, MissingMinuteSkippedWithRenormalizedWeights) {
  auto p = prices_from({10.0, 20.0, 30.0, 40.0}, 25.0);
  p.has_price[3] = 0;
  auto out = threshold_execution(std::vector<double>{0.0, 0.0, 1.0, 1.0}, p);
  EXPECT_FALSE(out.fallback);
  EXPECT_EQ(out.weights, (std::vector<double>{0.0, 0.0, 1.0, 0.0}));
  EXPECT_EQ(out.record.strategy_price, 30.0);
}

TEST(MinutePrices, VwapPerMinute) {
  std::vector<Transaction> z{{1000000, 1, 0}, {1020000, -3, 59'999}, {990000, 2, 120'000}};
  auto p = minute_prices(z, 0, 180'000);
  ASSERT_EQ(p.size(), 3u);
  EXPECT_NEAR(p.vwap[0], (100.0 + 306.0) / 4.0, 1e-12);
  EXPECT_EQ(p.has_price[1], 0);
  EXPECT_EQ(p.vwap[2], 99.0);
  EXPECT_NEAR(p.day_vwap, (100.0 + 306.0 + 198.0) / 6.0, 1e-12);
}

TEST(MinuteAggregates, HandComputed) {
  const std::vector<double> s{1.0, 3.0, 2.0, 10.0};
  const std::vector<TimeMs> t{0, 10, 20, 60'000};
  auto a = minute_aggregates(s, t, 0, 3);
  EXPECT_EQ(a[0][0], 2.0);
  EXPECT_EQ(a[0][1], 2.0);
  EXPECT_EQ(a[0][2], 3.0);
  EXPECT_EQ(a[0][3], 1.0);
  EXPECT_NEAR(a[0][4], 2.0 / 3.0, 1e-15);
  EXPECT_EQ(a[0][5], 2.0);
  EXPECT_EQ(a[1][0], 10.0);
  EXPECT_EQ(a[1][4], 0.0);
  for (double v : a[2]) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(minute_signal(a, MinuteStat::Range)[0], 2.0);
  EXPECT_THROW(parse_minute_stat("mode"), ConfigError);
}
