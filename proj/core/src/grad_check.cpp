// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#include "e2est/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "e2est/errors.hpp"

namespace e2est {

double evaluate_loss(const LossFn& loss_fn, const ParamStore& store) {
  Graph g(false);
  return g.value(loss_fn(g, store)).item();
}

GradCheckReport grad_check(const LossFn& loss_fn, ParamStore& store, double eps, std::size_t max_entries_per_param) {
  const double base1 = evaluate_loss(loss_fn, store);
  const double base2 = evaluate_loss(loss_fn, store);
  if (base1 != base2) throw NumericError("grad_check: loss function is not deterministic");

  GradMap analytic;
  {
    Graph g(true);
    Var loss = loss_fn(g, store);
    analytic = g.backward(loss, store);
  }

  GradCheckReport report;
  for (auto& [name, value] : store) {
    GradCheckEntry entry{name, 0.0, 0};
    const Tensor& ga = analytic.at(name);
    std::vector<std::size_t> probe;
    if (max_entries_per_param == 0 || value.size() <= max_entries_per_param) {
      probe.resize(value.size());
      for (std::size_t i = 0; i < value.size(); ++i) probe[i] = i;
    } else {
      for (std::size_t k = 0; k < max_entries_per_param; ++k) {
        probe.push_back(k * value.size() / max_entries_per_param);
      }
    }
    for (std::size_t i : probe) {
      const double saved = value[i];
      value[i] = saved + eps;
      const double up = evaluate_loss(loss_fn, store);
      value[i] = saved - eps;
      const double down = evaluate_loss(loss_fn, store);
      value[i] = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double an = ga[i];
      const double rel = std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
      entry.max_rel_error = std::max(entry.max_rel_error, rel);
      ++entry.entries_checked;
    }
    if (entry.max_rel_error >= report.max_rel_error) {
      report.max_rel_error = entry.max_rel_error;
      report.worst_param = name;
    }
    report.params.push_back(std::move(entry));
  }
  return report;
}

}  // namespace e2est
