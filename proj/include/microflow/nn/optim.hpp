#pragma once

#include <cmath>

#include "microflow/nn/params.hpp"

namespace microflow::nn {

// Adam with bias correction. Moments are kept per parameter entry; entries
// marked non-trainable are left untouched.
class Adam {
public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    state_.lr = lr;
    state_.beta1 = beta1;
    state_.beta2 = beta2;
    state_.eps = eps;
  }

  explicit Adam(AdamState state) : state_(std::move(state)) {}

  // One update from the gradients currently accumulated in `params`.
  void step(ModelParams& params) {
    ensure_shapes(params);
    ++state_.step;
    const double t = static_cast<double>(state_.step);
    const double c1 = 1.0 - std::pow(state_.beta1, t);
    const double c2 = 1.0 - std::pow(state_.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& e = params[k];
      if (!e.trainable) continue;
      auto w = e.value.values();
      auto g = e.grad.values();
      auto m = state_.m[k].values();
      auto v = state_.v[k].values();
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = state_.beta1 * m[i] + (1.0 - state_.beta1) * g[i];
        v[i] = state_.beta2 * v[i] + (1.0 - state_.beta2) * g[i] * g[i];
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        w[i] -= state_.lr * mhat / (std::sqrt(vhat) + state_.eps);
      }
    }
  }

  const AdamState& state() const noexcept { return state_; }
  AdamState& state() noexcept { return state_; }

  void set_lr(double lr) noexcept { state_.lr = lr; }

private:
  void ensure_shapes(const ModelParams& params) {
    if (state_.m.size() == params.size()) return;
    if (!state_.m.empty()) throw InvariantError("adam state does not match parameter set");
    for (const auto& e : params.entries()) {
      state_.m.emplace_back(e.value.rows(), e.value.cols());
      state_.v.emplace_back(e.value.rows(), e.value.cols());
    }
  }

  AdamState state_;
};

}  // namespace microflow::nn
