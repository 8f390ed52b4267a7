// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "e2est/autodiff.hpp"

namespace e2est {

/// Builds a scalar loss on the given graph from the given parameters.
using LossFn = std::function<Var(Graph&, const ParamStore&)>;

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> params;
  double max_rel_error = 0.0;
  std::string worst_param;
};

/// Compares reverse-mode gradients with central finite differences.
///
/// Relative error is |g_an - g_fd| / max(1, |g_an|, |g_fd|). When
/// `max_entries_per_param` is non-zero, large tensors are probed at that many
/// evenly spaced entries instead of exhaustively. Throws NumericError if two
/// baseline evaluations of `loss_fn` disagree.
GradCheckReport grad_check(const LossFn& loss_fn, ParamStore& store, double eps = 1e-5,
                           std::size_t max_entries_per_param = 0);

/// Forward-only evaluation of `loss_fn`.
double evaluate_loss(const LossFn& loss_fn, const ParamStore& store);

}  // namespace e2est
