// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#include "e2est/optim.hpp"

#include <cmath>

#include "e2est/errors.hpp"

namespace e2est {

void adam_step(ParamStore& store, const GradMap& grads, OptimizerState& opt) {
  if (grads.size() != store.size()) {
    throw ShapeError("adam_step: got " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(store.size()) + " parameters");
  }
  for (const auto& [name, value] : store) {
    auto it = grads.find(name);
    if (it == grads.end()) throw ShapeError("adam_step: missing gradient for " + name);
    if (!it->second.same_shape(value)) {
      throw ShapeError("adam_step: gradient for " + name + " has shape " + shape_str(it->second.shape()) +
                       ", parameter has " + shape_str(value.shape()));
    }
  }

  opt.step += 1;
  const double t = static_cast<double>(opt.step);
  const AdamConfig& c = opt.adam;
  const double corr1 = 1.0 - std::pow(c.beta1, t);
  const double corr2 = 1.0 - std::pow(c.beta2, t);

  for (auto& [name, value] : store) {
    const Tensor& g = grads.at(name);
    auto [m_it, m_new] = opt.first_moment.try_emplace(name, value.shape());
    auto [v_it, v_new] = opt.second_moment.try_emplace(name, value.shape());
    Tensor& m = m_it->second;
    Tensor& v = v_it->second;
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double mhat = m[i] / corr1;
      const double vhat = v[i] / corr2;
      value[i] -= opt.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
    }
    value.check_finite("adam_step(" + name + ")");
  }
}

double plateau_update(LrSchedule& sched, double dev_score, double learning_rate) {
  if (dev_score > sched.best_score) {
    sched.best_score = dev_score;
    sched.stale_count = 0;
    return learning_rate;
  }
  sched.stale_count += 1;
  if (sched.stale_count >= sched.patience) {
    sched.stale_count = 0;
    return learning_rate * sched.decay_factor;
  }
  return learning_rate;
}

}  // namespace e2est
