// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>

#include "e2est/autodiff.hpp"
#include "e2est/param_store.hpp"

namespace e2est {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam moments keyed by parameter name. Moments for a parameter are created
/// (as zeros) the first time the parameter receives a step, so parameters
/// added by encoder growth or adapter insertion start with fresh moments.
struct OptimizerState {
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
  std::uint64_t step = 0;
  double learning_rate = 1e-3;
  AdamConfig adam;
};

/// One bias-corrected Adam update. `grads` must name exactly the store's
/// parameters with matching shapes.
void adam_step(ParamStore& store, const GradMap& grads, OptimizerState& opt);

/// Reduce-on-plateau learning-rate schedule; higher scores are better.
struct LrSchedule {
  double decay_factor = 0.9;
  int patience = 6;
  double best_score = -std::numeric_limits<double>::infinity();
  int stale_count = 0;
};

/// Records `dev_score` and returns the learning rate to use from now on.
double plateau_update(LrSchedule& sched, double dev_score, double learning_rate);

}  // namespace e2est
