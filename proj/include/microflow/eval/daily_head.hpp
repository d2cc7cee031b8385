#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "microflow/error.hpp"
#include "microflow/eval/metrics.hpp"
#include "microflow/lob/types.hpp"
#include "microflow/segment/segmenter.hpp"

namespace microflow::eval {

// y_T = p_{T+2} / p_{T+1} - 1 from a series of daily closes; nullopt when
// either close is missing.
inline std::optional<double> daily_label(std::span<const double> closes, std::size_t day) {
  if (day + 2 >= closes.size()) return std::nullopt;
  const double p1 = closes[day + 1], p2 = closes[day + 2];
  if (!(p1 > 0.0) || !(p2 > 0.0)) throw ConfigError("daily closes must be positive");
  return p2 / p1 - 1.0;
}

struct DailyBar {
  double open = 0.0, high = 0.0, low = 0.0, close = 0.0;
  double volume = 0.0;
  double vwap = 0.0;
  std::size_t trades = 0;
};

inline DailyBar daily_bar(std::span<const Transaction> z) {
  if (z.empty()) throw ConfigError("daily bar of a day without transactions");
  DailyBar b;
  b.open = b.high = b.low = z.front().price_ticks();
  double notional = 0.0;
  for (const auto& t : z) {
    const double p = t.price_ticks();
    b.high = std::max(b.high, p);
    b.low = std::min(b.low, p);
    b.volume += static_cast<double>(t.quantity());
    notional += p * static_cast<double>(t.quantity());
  }
  b.close = z.back().price_ticks();
  b.vwap = notional / b.volume;
  b.trades = z.size();
  return b;
}

inline constexpr std::size_t kDailyStatDim = 6;

// Scale-free day statistics: open-to-close return, high and low relative to
// open, VWAP relative to close, log volume, log trade count.
inline std::array<double, kDailyStatDim> daily_statistics(const DailyBar& b) {
  return {b.close / b.open - 1.0,           b.high / b.open - 1.0, b.low / b.open - 1.0,
          b.vwap / b.close - 1.0,           std::log1p(b.volume), std::log1p(static_cast<double>(b.trades))};
}

inline constexpr std::size_t kSegmentDescriptorDim = 4;

// Price, volume and time description of one segment: mid return over the
// window, log traded volume, signed active-volume imbalance (buy positive),
// and position in the session in [0, 1).
inline std::array<double, kSegmentDescriptorDim> segment_descriptor(const SegmentedDay& day, std::size_t n) {
  const Segment& s = day.segments.at(n);
  const double end_mid = n + 1 < day.segments.size() ? day.segments[n + 1].mid : s.mid;
  double buy = 0.0, sell = 0.0;
  for (const auto& t : day.transactions_of(s)) (t.size < 0 ? buy : sell) += static_cast<double>(t.quantity());
  const double vol = buy + sell;
  return {s.mid > 0.0 ? end_mid / s.mid - 1.0 : 0.0, std::log1p(vol), vol > 0.0 ? (buy - sell) / vol : 0.0,
          static_cast<double>(n) / static_cast<double>(day.segments.size())};
}

// Column-wise mean, max and min of the rows, concatenated; zeros when there
// are no rows.
inline std::vector<double> pool_rows(const std::vector<std::vector<double>>& rows, std::size_t width) {
  std::vector<double> out(3 * width, 0.0);
  if (rows.empty()) return out;
  for (std::size_t c = 0; c < width; ++c) {
    double s = 0.0, mx = -INFINITY, mn = INFINITY;
    for (const auto& r : rows) {
      if (r.size() != width) throw DimensionError("pooled rows differ in width");
      s += r[c];
      mx = std::max(mx, r[c]);
      mn = std::min(mn, r[c]);
    }
    out[c] = s / static_cast<double>(rows.size());
    out[width + c] = mx;
    out[2 * width + c] = mn;
  }
  return out;
}

// One (instrument, day) row of the daily panel.
struct DailySample {
  std::string instrument;
  std::size_t day = 0;
  std::vector<double> x;
  double y = 0.0;
};

// Standardized ridge regression with an unpenalized intercept.
struct RidgeModel {
  std::vector<double> mean, scale, coef;
  double intercept = 0.0;
  double alpha = 0.0;

  double predict(std::span<const double> x) const {
    if (x.size() != coef.size()) throw DimensionError("ridge input width differs from the fitted width");
    double v = intercept;
    for (std::size_t j = 0; j < x.size(); ++j) v += coef[j] * (x[j] - mean[j]) / scale[j];
    return v;
  }
};

// Closed form (Z'Z + alpha n I) b = Z'(y - ybar) on standardized columns.
// A failed or non-finite solve retries with alpha x 10.
inline RidgeModel fit_ridge(const std::vector<DailySample>& train, double alpha,
                            const std::function<void(const std::string&)>& warn = {}) {
  if (train.empty()) throw ConfigError("ridge fit over zero samples");
  const std::size_t n = train.size(), d = train.front().x.size();
  RidgeModel m;
  m.mean.assign(d, 0.0);
  m.scale.assign(d, 1.0);
  for (const auto& s : train) {
    if (s.x.size() != d) throw DimensionError("daily samples differ in width");
    for (std::size_t j = 0; j < d; ++j) m.mean[j] += s.x[j];
    m.intercept += s.y;
  }
  for (auto& v : m.mean) v /= static_cast<double>(n);
  m.intercept /= static_cast<double>(n);
  for (std::size_t j = 0; j < d; ++j) {
    double ss = 0.0;
    for (const auto& s : train) ss += (s.x[j] - m.mean[j]) * (s.x[j] - m.mean[j]);
    const double sd = std::sqrt(ss / static_cast<double>(n));
    m.scale[j] = sd > 1e-12 ? sd : 1.0;
  }
  Eigen::MatrixXd z(n, d);
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) z(i, j) = (train[i].x[j] - m.mean[j]) / m.scale[j];
    y(i) = train[i].y - m.intercept;
  }
  const Eigen::MatrixXd gram = z.transpose() * z;
  const Eigen::VectorXd rhs = z.transpose() * y;
  double a = std::max(alpha, 0.0);
  for (int attempt = 0; attempt < 12; ++attempt) {
    Eigen::MatrixXd lhs = gram;
    lhs.diagonal().array() += a * static_cast<double>(n);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(lhs);
    const Eigen::VectorXd piv = ldlt.vectorD().cwiseAbs();
    const bool conditioned = d == 0 || piv.minCoeff() > 1e-12 * std::max(1.0, piv.maxCoeff());
    if (ldlt.info() == Eigen::Success && ldlt.isPositive() && conditioned) {
      const Eigen::VectorXd b = ldlt.solve(rhs);
      if (b.allFinite() && (lhs * b - rhs).norm() <= 1e-8 * std::max(1.0, rhs.norm())) {
        m.coef.assign(b.data(), b.data() + d);
        m.alpha = a;
        return m;
      }
    }
    const double next = a > 0.0 ? a * 10.0 : 1e-6;
    if (warn) warn("ridge normal matrix singular at alpha " + std::to_string(a) + "; retrying with " + std::to_string(next));
    a = next;
  }
  throw NumericError("ridge solve failed for every regularization level");
}

struct PanelScore {
  std::vector<double> daily_ic;       // per test day
  std::vector<double> daily_rank_ic;  // per test day
  double ic = 0.0;                    // mean daily IC
  double rank_ic = 0.0;               // mean daily Rank IC
  double rank_ir = 0.0;               // NaN when undefined
};

// Cross-sectional IC and Rank IC per day across instruments, then averaged.
// Days with fewer than 3 instruments or constant predictions are skipped.
inline PanelScore score_panel(const std::vector<DailySample>& samples, std::span<const double> pred) {
  if (samples.size() != pred.size()) throw DimensionError("predictions and samples differ in length");
  std::map<std::size_t, std::pair<std::vector<double>, std::vector<double>>> by_day;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto& [p, y] = by_day[samples[i].day];
    p.push_back(pred[i]);
    y.push_back(samples[i].y);
  }
  PanelScore s;
  for (const auto& [day, py] : by_day) {
    const auto& [p, y] = py;
    if (p.size() < 3) continue;
    try {
      const double a = ic(p, y), b = rank_ic(p, y);
      s.daily_ic.push_back(a);
      s.daily_rank_ic.push_back(b);
    } catch (const NumericError&) {
    }
  }
  if (s.daily_ic.empty()) throw NumericError("no test day has a defined cross-sectional IC");
  s.ic = mean(s.daily_ic);
  s.rank_ic = mean(s.daily_rank_ic);
  try {
    s.rank_ir = rank_ir(s.daily_rank_ic);
  } catch (const Error&) {
    s.rank_ir = std::nan("");
  }
  return s;
}

struct DailyHeadResult {
  RidgeModel model;
  PanelScore test;
  std::vector<double> test_pred;
};

// Fits ridge heads over an alpha grid on `train`, keeps the one with the
// lowest validation MSE (train MSE when there is no validation data), and
// scores the test split.
inline DailyHeadResult fit_daily_head(const std::vector<DailySample>& train, const std::vector<DailySample>& valid,
                                      const std::vector<DailySample>& test,
                                      std::span<const double> alphas = std::array<double, 6>{1e-3, 1e-2, 1e-1, 1.0,
                                                                                             10.0, 100.0},
                                      const std::function<void(const std::string&)>& warn = {}) {
  if (alphas.empty()) throw ConfigError("ridge alpha grid is empty");
  const auto& sel = valid.empty() ? train : valid;
  DailyHeadResult best;
  double best_mse = INFINITY;
  for (double a : alphas) {
    RidgeModel m = fit_ridge(train, a, warn);
    double mse = 0.0;
    for (const auto& s : sel) {
      const double e = m.predict(s.x) - s.y;
      mse += e * e;
    }
    if (mse < best_mse) {
      best_mse = mse;
      best.model = std::move(m);
    }
  }
  best.test_pred.reserve(test.size());
  for (const auto& s : test) best.test_pred.push_back(best.model.predict(s.x));
  best.test = score_panel(test, best.test_pred);
  return best;
}

}  // namespace microflow::eval
