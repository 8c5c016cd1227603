#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "bnet2/tensor.hpp"

namespace bnet2 {

/// Staircase exponential decay: base * factor^floor(step / interval).
struct LearningRateSchedule {
  double base_rate = 1e-3;
  double decay_factor = 0.85;
  std::size_t decay_interval = 500;

  double rate(std::size_t step) const {
    if (decay_interval == 0) return base_rate;
    return base_rate * std::pow(decay_factor, static_cast<double>(step / decay_interval));
  }
};

struct AdamState {
  std::size_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  LearningRateSchedule schedule;

  /// Zero moments congruent to `params`.
  static AdamState for_params(std::span<Tensor* const> params, LearningRateSchedule schedule = {}) {
    AdamState s;
    s.schedule = schedule;
    for (const Tensor* p : params) {
      s.first_moment.emplace_back(p->shape());
      s.second_moment.emplace_back(p->shape());
    }
    return s;
  }
};

/// One bias-corrected ADAM update in place. The rate used for update number
/// n (1-based) is schedule.rate(n - 1).
inline void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size())
    throw DimensionError("adam_step: parameter, gradient and moment counts differ");
  for (std::size_t k = 0; k < params.size(); ++k) {
    require_same_shape(*params[k], grads[k], "adam_step gradient");
    require_same_shape(*params[k], state.first_moment[k], "adam_step moment");
  }
  const double lr = state.schedule.rate(state.step);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    Tensor& m = state.first_moment[k];
    Tensor& v = state.second_moment[k];
    const Tensor& g = grads[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

}  // namespace bnet2
