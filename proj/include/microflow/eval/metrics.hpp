#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "microflow/error.hpp"

namespace microflow::eval {

inline double mean(std::span<const double> x) {
  if (x.empty()) throw ConfigError("mean of an empty series");
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

// Population standard deviation.
inline double stddev(std::span<const double> x) {
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size()));
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("correlation inputs differ in length");
  if (a.size() < 3) throw ConfigError("correlation needs at least 3 points");
  const double ma = mean(a), mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw NumericError("correlation undefined for a constant vector");
  return sab / std::sqrt(saa * sbb);
}

// 1-based ranks; tied values share the average of their ranks.
inline std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double ic(std::span<const double> pred, std::span<const double> truth) { return pearson(pred, truth); }

inline double rank_ic(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw DimensionError("correlation inputs differ in length");
  const auto rp = average_ranks(pred);
  const auto rt = average_ranks(truth);
  return pearson(rp, rt);
}

// Mean over population std of a daily Rank IC series.
inline double rank_ir(std::span<const double> series) {
  if (series.size() < 2) throw ConfigError("rank IR needs at least 2 days");
  const double m = mean(series);
  const double s = stddev(series);
  if (!(s > 1e-12 * std::max(1.0, std::fabs(m)))) throw NumericError("rank IR undefined for a constant series");
  return m / s;
}

struct ExecutionRecord {
  double strategy_price = 0.0;  // average execution price of the strategy
  double market_price = 0.0;    // day VWAP
};

// Price advantage in basis points for sell orders: 1e4 / |D| * sum(P/P~ - 1).
inline double pa(std::span<const ExecutionRecord> records) {
  if (records.empty()) throw ConfigError("price advantage over zero orders");
  double s = 0.0;
  for (const auto& r : records) {
    if (!(r.strategy_price > 0.0) || !(r.market_price > 0.0)) throw ConfigError("execution prices must be positive");
    s += r.strategy_price / r.market_price - 1.0;
  }
  return 1e4 * s / static_cast<double>(records.size());
}

// Per-order PA values (bps).
inline std::vector<double> pa_series(std::span<const ExecutionRecord> records) {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(pa(std::span<const ExecutionRecord>(&r, 1)));
  return out;
}

// E[PA | PA > 0] / |E[PA | PA < 0]|.
inline double glr(std::span<const double> pa_values) {
  double gain = 0.0, loss = 0.0;
  std::size_t ng = 0, nl = 0;
  for (double v : pa_values) {
    if (v > 0.0) {
      gain += v;
      ++ng;
    } else if (v < 0.0) {
      loss += v;
      ++nl;
    }
  }
  if (ng == 0 || nl == 0) throw NumericError("gain-loss ratio needs both gains and losses");
  return (gain / static_cast<double>(ng)) / std::fabs(loss / static_cast<double>(nl));
}

// Area under the ROC curve of `score` for binary `label` (ties count 1/2).
inline double roc_auc(std::span<const double> score, std::span<const std::uint8_t> label) {
  if (score.size() != label.size()) throw DimensionError("AUC inputs differ in length");
  const auto r = average_ranks(score);
  double pos_rank = 0.0;
  std::size_t npos = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (label[i]) {
      pos_rank += r[i];
      ++npos;
    }
  }
  const std::size_t nneg = r.size() - npos;
  if (npos == 0 || nneg == 0) throw ConfigError("AUC needs both classes");
  const double np = static_cast<double>(npos);
  return (pos_rank - np * (np + 1.0) / 2.0) / (np * static_cast<double>(nneg));
}

}  // namespace microflow::eval
