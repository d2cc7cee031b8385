#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "microflow/nn/autodiff.hpp"
#include "microflow/nn/params.hpp"
#include "microflow/util/rng.hpp"

namespace microflow::nn {

// Builds a scalar loss on a fresh tape bound to the given parameters.
using LossFn = std::function<Var(Tape&)>;

struct GradCheckOptions {
  double eps = 1e-5;
  // Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps
  // coordinates whose true gradient is zero from dividing by rounding noise.
  double floor = 1e-7;
  // When nonzero, check at most this many randomly chosen coordinates per
  // parameter tensor.
  std::size_t max_per_param = 0;
  std::uint64_t seed = 0;
  // Fourth-order stencil (f(-2h), f(-h), f(h), f(2h)); allows a larger step,
  // which keeps rounding noise small for tiny gradients of O(1) losses.
  bool five_point = false;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

inline double eval_loss(const LossFn& fn, ModelParams& params) {
  Tape t(&params, false);
  return fn(t).value().item();
}

// Compares reverse-mode gradients against central finite differences for
// every trainable parameter.
inline GradCheckResult grad_check(const LossFn& fn, ModelParams& params, GradCheckOptions opt = {}) {
  params.zero_grad();
  {
    Tape t(&params, true);
    Var loss = fn(t);
    t.backward(loss);
  }
  Rng rng(opt.seed);
  GradCheckResult res;
  for (auto& e : params.entries()) {
    if (!e.trainable) continue;
    std::vector<std::size_t> coords(e.value.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (opt.max_per_param != 0 && coords.size() > opt.max_per_param) {
      rng.shuffle(coords);
      coords.resize(opt.max_per_param);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const double orig = e.value[i];
      auto at = [&](double offset) {
        e.value[i] = orig + offset;
        const double v = eval_loss(fn, params);
        e.value[i] = orig;
        return v;
      };
      const double h = opt.eps;
      const double numeric = opt.five_point
                                 ? (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h)
                                 : (at(h) - at(-h)) / (2.0 * h);
      const double analytic = e.grad[i];
      const double denom = std::max({std::fabs(analytic), std::fabs(numeric), opt.floor});
      const double rel = std::fabs(analytic - numeric) / denom;
      ++res.checked;
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_param = e.name;
        res.worst_index = i;
        res.analytic = analytic;
        res.numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace microflow::nn
