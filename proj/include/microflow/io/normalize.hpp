#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "microflow/error.hpp"
#include "microflow/nn/tensor.hpp"

namespace microflow {

// Per-feature z-score statistics fitted on the training split. Features with
// zero variance are dropped and listed in `dropped`.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // population convention; 0 for dropped features
  std::vector<std::size_t> kept;
  std::vector<std::size_t> dropped;

  std::size_t input_dim() const noexcept { return mean.size(); }

  bool operator==(const NormStats&) const = default;
};

// rows = samples, cols = features.
inline NormStats zscore_fit(const nn::Tensor& train) {
  if (train.rows() == 0) throw ConfigError("z-score fit on empty training split");
  const std::size_t d = train.cols();
  const double n = static_cast<double>(train.rows());
  NormStats s;
  s.mean.assign(d, 0.0);
  s.stddev.assign(d, 0.0);
  for (std::size_t r = 0; r < train.rows(); ++r) {
    for (std::size_t c = 0; c < d; ++c) s.mean[c] += train(r, c);
  }
  for (auto& m : s.mean) m /= n;
  for (std::size_t r = 0; r < train.rows(); ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const double dv = train(r, c) - s.mean[c];
      s.stddev[c] += dv * dv;
    }
  }
  for (std::size_t c = 0; c < d; ++c) {
    s.stddev[c] = std::sqrt(s.stddev[c] / n);
    // Relative threshold: a column of identical large values can leave
    // rounding residue in the variance.
    const double tol = 1e-12 * std::max(1.0, std::fabs(s.mean[c]));
    if (s.stddev[c] <= tol) {
      s.stddev[c] = 0.0;
      s.dropped.push_back(c);
    } else {
      s.kept.push_back(c);
    }
  }
  return s;
}

// Normalizes and removes dropped columns.
inline nn::Tensor zscore_apply(const NormStats& s, const nn::Tensor& x) {
  if (x.cols() != s.input_dim()) {
    throw DimensionError("z-score: expected " + std::to_string(s.input_dim()) + " features, got " +
                         std::to_string(x.cols()));
  }
  nn::Tensor out(x.rows(), s.kept.size());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t k = 0; k < s.kept.size(); ++k) {
      const std::size_t c = s.kept[k];
      out(r, k) = (x(r, c) - s.mean[c]) / s.stddev[c];
    }
  }
  return out;
}

// Normalizes in place, keeping the feature layout; dropped columns become 0.
// The model pipeline uses this form so network input widths stay fixed.
inline void zscore_apply_inplace(const NormStats& s, std::span<double> row) {
  if (row.size() != s.input_dim()) {
    throw DimensionError("z-score: expected " + std::to_string(s.input_dim()) + " features, got " +
                         std::to_string(row.size()));
  }
  for (std::size_t c = 0; c < row.size(); ++c) {
    row[c] = s.stddev[c] > 0.0 ? (row[c] - s.mean[c]) / s.stddev[c] : 0.0;
  }
}

struct ZScoreResult {
  nn::Tensor train;
  std::vector<nn::Tensor> others;
  NormStats stats;
};

// Fits on `train` and applies the same statistics to every other split.
inline ZScoreResult zscore_fit_apply(const nn::Tensor& train, const std::vector<nn::Tensor>& others = {}) {
  ZScoreResult r;
  r.stats = zscore_fit(train);
  r.train = zscore_apply(r.stats, train);
  for (const auto& o : others) r.others.push_back(zscore_apply(r.stats, o));
  return r;
}

}  // namespace microflow
