#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "microflow/error.hpp"
#include "microflow/nn/autodiff.hpp"
#include "microflow/nn/optim.hpp"
#include "microflow/util/rng.hpp"

namespace microflow {

inline constexpr const char* kCenterParam = "svdd.center";
inline constexpr const char* kRadiusParam = "svdd.radius";

struct SvddConfig {
  double mu = 0.02;
  double lambda = 0.1;

  void validate() const {
    if (!(mu > 0.0 && mu <= 1.0)) throw ConfigError("mu must lie in (0, 1]");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
  }
};

// Center drawn from U(-1, 1)^d; coordinates closer than 0.1 to zero are
// pushed out to +-0.1.
inline std::vector<double> init_center(std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> c(dim);
  for (auto& v : c) {
    v = rng.uniform(-1.0, 1.0);
    if (std::fabs(v) < 0.1) v = v < 0.0 ? -0.1 : 0.1;
  }
  return c;
}

// Registers the fixed center and the learned radius.
inline void add_hypersphere(nn::ModelParams& params, std::span<const double> center, double radius) {
  params.add(kCenterParam, nn::Tensor::row(center), false);
  params.add(kRadiusParam, nn::Tensor::scalar(std::max(radius, 0.0)), true);
}

inline std::vector<double> hypersphere_center(const nn::ModelParams& params) {
  return params.value(kCenterParam).to_vector();
}

inline double hypersphere_radius(const nn::ModelParams& params) { return params.value(kRadiusParam).item(); }

// R^2 + 1/(mu n) * sum_i max(0, |F_i - c|^2 - R^2) + lambda/2 * |theta|_2
// for a batch F (B x d). `n` is the normalizing count (the batch size for a
// minibatch estimate); theta are the kernel weights.
inline nn::Var svdd_loss(nn::Var features, nn::Var center, nn::Var radius, std::span<const nn::Var> theta,
                         const SvddConfig& cfg, std::size_t n) {
  if (n == 0 || features.rows() == 0) throw ConfigError("svdd loss over zero valid segments");
  if (center.cols() != features.cols()) throw DimensionError("feature and center widths differ");
  nn::Var diff = nn::sub(features, nn::repeat_rows(center, features.rows()));
  nn::Var dist2 = nn::row_sum(nn::square(diff));
  nn::Var r2 = nn::square(radius);
  nn::Var outside = nn::relu(nn::add(dist2, nn::scale(r2, -1.0)));
  nn::Var loss = nn::add(r2, nn::scale(nn::sum(outside), 1.0 / (cfg.mu * static_cast<double>(n))));
  if (cfg.lambda > 0.0 && !theta.empty()) {
    nn::Var sq = nn::sum_squares(theta[0]);
    for (std::size_t i = 1; i < theta.size(); ++i) sq = nn::add(sq, nn::sum_squares(theta[i]));
    loss = nn::add(loss, nn::scale(nn::sqrt(sq), 0.5 * cfg.lambda));
  }
  return loss;
}

inline double uniqueness(std::span<const double> feature, std::span<const double> center) {
  if (feature.size() != center.size()) throw DimensionError("feature and center widths differ");
  double s = 0.0;
  for (std::size_t i = 0; i < feature.size(); ++i) s += (feature[i] - center[i]) * (feature[i] - center[i]);
  return std::sqrt(s);
}

// Kernel weights entering the regularizer: every trainable entry except R.
inline std::vector<nn::ParamId> kernel_params(const nn::ModelParams& params) {
  std::vector<nn::ParamId> ids;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].trainable && params[i].name != kRadiusParam) ids.push_back(i);
  }
  return ids;
}

// Maps sample i to its 1 x d feature on the given tape.
using EmbedFn = std::function<nn::Var(nn::Tape&, std::size_t)>;

inline std::vector<double> compute_uniqueness(nn::ModelParams& params, const EmbedFn& embed, std::size_t n) {
  const auto c = hypersphere_center(params);
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    nn::Tape t(&params, false);
    d[i] = uniqueness(embed(t, i).value().row_span(0), c);
  }
  return d;
}

inline double full_svdd_loss(nn::ModelParams& params, const EmbedFn& embed, std::size_t n, const SvddConfig& cfg) {
  if (n == 0) throw ConfigError("svdd loss over zero valid segments");
  const auto d = compute_uniqueness(params, embed, n);
  const double r = hypersphere_radius(params);
  double pen = 0.0;
  for (double v : d) pen += std::max(0.0, v * v - r * r);
  double sq = 0.0;
  for (auto id : kernel_params(params)) {
    for (double w : params.value(id).values()) sq += w * w;
  }
  return r * r + pen / (cfg.mu * static_cast<double>(n)) + 0.5 * cfg.lambda * std::sqrt(sq);
}

// Value at quantile q (0..1) using the lower order statistic.
inline double lower_quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  const auto k = static_cast<std::size_t>(std::floor(q * static_cast<double>(v.size() - 1)));
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

struct SvddTrainConfig {
  std::size_t max_epochs = 20;
  std::size_t patience = 5;
  std::size_t batch_size = 128;
  double lr = 1e-3;
  std::size_t samples_per_epoch = 0;  // 0 = all training samples
  std::uint64_t seed = 0;
};

struct SvddTrainReport {
  double initial_radius = 0.0;
  std::vector<double> train_loss;
  std::vector<double> valid_loss;
  std::size_t best_epoch = 0;
  double best_valid_loss = 0.0;
  double final_radius = 0.0;
  double outside_fraction = 0.0;  // training samples with d > R after training
};

// Minibatch Adam over the kernel weights and R (clamped at 0); c stays fixed.
// R starts at the (1 - mu) quantile of the initial training distances, the
// stationary point of the radius gradient. Keeps the best validation epoch.
inline SvddTrainReport train_svdd(nn::ModelParams& params, const EmbedFn& embed_train, std::size_t n_train,
                                  const EmbedFn& embed_valid, std::size_t n_valid, const SvddConfig& cfg,
                                  const SvddTrainConfig& tc,
                                  const std::function<void(const std::string&)>& log = {}) {
  cfg.validate();
  if (n_train == 0) throw ConfigError("svdd training needs at least one valid segment");
  if (tc.batch_size == 0) throw ConfigError("batch_size must be positive");
  const EmbedFn& ev = n_valid > 0 ? embed_valid : embed_train;
  const std::size_t nv = n_valid > 0 ? n_valid : n_train;

  const nn::ParamId center_id = params.id(kCenterParam);
  const nn::ParamId radius_id = params.id(kRadiusParam);
  const nn::Tensor center_before = params.value(center_id);
  {
    const auto d0 = compute_uniqueness(params, embed_train, n_train);
    params.value(radius_id)[0] = lower_quantile(d0, 1.0 - cfg.mu);
  }
  SvddTrainReport rep;
  rep.initial_radius = params.value(radius_id)[0];
  rep.best_valid_loss = full_svdd_loss(params, ev, nv, cfg);
  const auto theta_ids = kernel_params(params);

  nn::ModelParams best = params;
  nn::Adam adam(tc.lr);
  Rng rng(tc.seed);
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    rng.shuffle(order);
    const std::size_t take = tc.samples_per_epoch == 0 ? n_train : std::min(tc.samples_per_epoch, n_train);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t lo = 0; lo < take; lo += tc.batch_size) {
      const std::size_t hi = std::min(take, lo + tc.batch_size);
      params.zero_grad();
      nn::Tape t(&params, true);
      std::vector<nn::Var> rows;
      rows.reserve(hi - lo);
      for (std::size_t k = lo; k < hi; ++k) rows.push_back(embed_train(t, order[k]));
      std::vector<nn::Var> theta;
      for (auto id : theta_ids) theta.push_back(t.param(id));
      nn::Var loss = svdd_loss(nn::concat_rows(rows), t.param(center_id), t.param(radius_id), theta, cfg, hi - lo);
      const double v = loss.value().item();
      if (!std::isfinite(v) || v > 1e6) {
        throw NumericError("svdd training diverged at epoch " + std::to_string(epoch) + " (loss " +
                           std::to_string(v) + ")");
      }
      t.backward(loss);
      adam.step(params);
      params.value(radius_id)[0] = std::max(0.0, params.value(radius_id)[0]);
      epoch_loss += v;
      ++batches;
    }
    rep.train_loss.push_back(epoch_loss / static_cast<double>(std::max<std::size_t>(batches, 1)));
    const double vl = full_svdd_loss(params, ev, nv, cfg);
    rep.valid_loss.push_back(vl);
    if (log) {
      log("svdd epoch " + std::to_string(epoch) + " train=" + std::to_string(rep.train_loss.back()) +
          " valid=" + std::to_string(vl) + " R=" + std::to_string(params.value(radius_id)[0]));
    }
    if (vl < rep.best_valid_loss) {
      rep.best_valid_loss = vl;
      rep.best_epoch = epoch;
      best = params;
      since_best = 0;
    } else if (++since_best >= tc.patience) {
      break;
    }
  }
  params.assign_from(best);
  if (!(params.value(center_id) == center_before)) throw InvariantError("hypersphere center changed during training");
  rep.final_radius = params.value(radius_id)[0];
  const auto d = compute_uniqueness(params, embed_train, n_train);
  std::size_t out = 0;
  for (double v : d) out += v > rep.final_radius ? 1 : 0;
  rep.outside_fraction = static_cast<double>(out) / static_cast<double>(n_train);
  return rep;
}

struct UniquenessRanking {
  std::vector<double> d;               // per valid segment, input order
  std::vector<std::size_t> order;      // positions sorted by d descending
  std::vector<std::uint8_t> selected;  // per valid segment
  std::size_t n_selected = 0;
};

inline std::size_t selection_count(std::size_t n_valid, double mu) {
  if (!(mu > 0.0 && mu <= 1.0)) throw ConfigError("mu must lie in (0, 1]");
  if (n_valid == 0) return 0;
  const auto k = static_cast<std::size_t>(std::floor(mu * static_cast<double>(n_valid) + 1e-9));
  return std::min(n_valid, std::max<std::size_t>(1, k));
}

// Sorts by d descending (ties keep the earlier position) and marks the top
// max(1, floor(mu * n)) entries.
inline UniquenessRanking rank_and_select(std::vector<double> d, double mu) {
  UniquenessRanking r;
  r.order.resize(d.size());
  std::iota(r.order.begin(), r.order.end(), std::size_t{0});
  std::stable_sort(r.order.begin(), r.order.end(), [&](std::size_t a, std::size_t b) { return d[a] > d[b]; });
  r.n_selected = selection_count(d.size(), mu);
  r.selected.assign(d.size(), 0);
  for (std::size_t k = 0; k < r.n_selected; ++k) r.selected[r.order[k]] = 1;
  r.d = std::move(d);
  return r;
}

}  // namespace microflow
