// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#include "e2est/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "e2est/errors.hpp"

namespace e2est::ctc {

namespace {

constexpr double kLogZero = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

void check_target(std::span<const std::size_t> target, std::size_t blank) {
  if (target.empty()) throw CtcInfeasibleError("CTC target must contain at least one label");
  for (std::size_t l : target) {
    if (l >= blank) {
      throw ShapeError("CTC label " + std::to_string(l) + " collides with blank index " + std::to_string(blank));
    }
  }
}

}  // namespace

std::size_t min_frames(std::span<const std::size_t> target) {
  std::size_t n = target.size();
  for (std::size_t j = 1; j < target.size(); ++j) {
    if (target[j] == target[j - 1]) ++n;
  }
  return n;
}

void check_feasible(std::span<const std::size_t> target, std::size_t frames) {
  const std::size_t need = min_frames(target);
  if (need > frames) {
    throw CtcInfeasibleError("CTC target of " + std::to_string(target.size()) + " labels needs " +
                             std::to_string(need) + " frames, only " + std::to_string(frames) + " available");
  }
}

CtcLattice forward_backward(const Tensor& lp, std::span<const std::size_t> target) {
  const std::size_t frames = lp.rows();
  const std::size_t blank = lp.cols() - 1;
  if (lp.cols() < 2) throw ShapeError("CTC needs at least one label plus blank");
  check_target(target, blank);
  check_feasible(target, frames);

  CtcLattice lat;
  const std::size_t s_len = 2 * target.size() + 1;
  lat.extended.resize(s_len, blank);
  for (std::size_t j = 0; j < target.size(); ++j) lat.extended[2 * j + 1] = target[j];
  const auto& ext = lat.extended;
  auto skip_ok = [&](std::size_t s) { return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]; };

  lat.log_alpha = Tensor::matrix(frames, s_len, kLogZero);
  lat.log_beta = Tensor::matrix(frames, s_len, kLogZero);
  Tensor& a = lat.log_alpha;
  Tensor& b = lat.log_beta;

  a(0, 0) = lp(0, blank);
  a(0, 1) = lp(0, ext[1]);
  for (std::size_t t = 1; t < frames; ++t) {
    for (std::size_t s = 0; s < s_len; ++s) {
      double v = a(t - 1, s);
      if (s >= 1) v = log_add(v, a(t - 1, s - 1));
      if (skip_ok(s)) v = log_add(v, a(t - 1, s - 2));
      a(t, s) = v == kLogZero ? kLogZero : v + lp(t, ext[s]);
    }
  }
  lat.log_prob_forward = log_add(a(frames - 1, s_len - 1), a(frames - 1, s_len - 2));

  b(frames - 1, s_len - 1) = lp(frames - 1, ext[s_len - 1]);
  b(frames - 1, s_len - 2) = lp(frames - 1, ext[s_len - 2]);
  for (std::size_t t = frames - 1; t-- > 0;) {
    for (std::size_t s = 0; s < s_len; ++s) {
      double v = b(t + 1, s);
      if (s + 1 < s_len) v = log_add(v, b(t + 1, s + 1));
      if (s + 2 < s_len && skip_ok(s + 2)) v = log_add(v, b(t + 1, s + 2));
      b(t, s) = v == kLogZero ? kLogZero : v + lp(t, ext[s]);
    }
  }
  lat.log_prob_backward = log_add(b(0, 0), b(0, 1));

  if (!std::isfinite(lat.log_prob_forward)) {
    throw NumericError("CTC forward pass produced a non-finite log-likelihood");
  }
  return lat;
}

double ctc_loss(const Tensor& frame_logprobs, std::span<const std::size_t> target) {
  return -forward_backward(frame_logprobs, target).log_prob_forward;
}

namespace {

Tensor grad_from_lattice(const CtcLattice& lat, const Tensor& frame_logprobs) {
  const std::size_t frames = frame_logprobs.rows();
  Tensor grad = Tensor::matrix(frames, frame_logprobs.cols());
  const double lp_total = lat.log_prob_forward;
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t s = 0; s < lat.extended.size(); ++s) {
      const double la = lat.log_alpha(t, s);
      const double lb = lat.log_beta(t, s);
      if (la == kLogZero || lb == kLogZero) continue;
      const std::size_t k = lat.extended[s];
      grad(t, k) -= std::exp(la + lb - frame_logprobs(t, k) - lp_total);
    }
  }
  return grad;
}

}  // namespace

Tensor ctc_grad(const Tensor& frame_logprobs, std::span<const std::size_t> target) {
  return grad_from_lattice(forward_backward(frame_logprobs, target), frame_logprobs);
}

double ctc_brute_force(const Tensor& frame_probs, std::span<const std::size_t> target) {
  const std::size_t frames = frame_probs.rows();
  const std::size_t symbols = frame_probs.cols();
  const std::size_t blank = symbols - 1;
  double paths = 1.0;
  for (std::size_t t = 0; t < frames; ++t) paths *= static_cast<double>(symbols);
  if (paths > 1e6) throw ShapeError("ctc_brute_force: too many paths to enumerate");

  std::vector<std::size_t> path(frames, 0);
  std::vector<std::size_t> collapsed;
  double total = 0.0;
  while (true) {
    collapsed.clear();
    std::size_t prev = blank;
    for (std::size_t t = 0; t < frames; ++t) {
      if (path[t] != blank && path[t] != prev) collapsed.push_back(path[t]);
      prev = path[t];
    }
    if (collapsed.size() == target.size() && std::equal(collapsed.begin(), collapsed.end(), target.begin())) {
      double p = 1.0;
      for (std::size_t t = 0; t < frames; ++t) p *= frame_probs(t, path[t]);
      total += p;
    }
    std::size_t t = 0;
    while (t < frames && ++path[t] == symbols) path[t++] = 0;
    if (t == frames) break;
  }
  return total;
}

Var ctc_loss(Graph& g, Var frame_logprobs, std::size_t batch, std::span<const std::size_t> lengths,
             const std::vector<std::vector<std::size_t>>& targets) {
  const Tensor& lp = g.value(frame_logprobs);
  if (batch == 0 || lp.rows() % batch != 0 || lengths.size() != batch || targets.size() != batch) {
    throw ShapeError("ctc_loss: batch layout mismatch");
  }
  const std::size_t cols = lp.cols();
  Tensor grad = Tensor::matrix(lp.rows(), cols);
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t frames = lengths[b];
    Tensor one = Tensor::matrix(frames, cols);
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t k = 0; k < cols; ++k) one(t, k) = lp(t * batch + b, k);
    }
    const CtcLattice lat = forward_backward(one, targets[b]);
    loss -= lat.log_prob_forward;
    if (g.recording()) {
      Tensor gb = grad_from_lattice(lat, one);
      for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t k = 0; k < cols; ++k) grad(t * batch + b, k) = gb(t, k);
      }
    }
  }
  return g.emit("ctc_loss", Tensor::scalar(loss), {frame_logprobs},
                [frame_logprobs, grad = std::move(grad)](Graph& g, Var self) {
                  const double d = g.grad(self)[0];
                  Tensor& dl = g.grad(frame_logprobs);
                  for (std::size_t i = 0; i < grad.size(); ++i) dl[i] += d * grad[i];
                });
}

}  // namespace e2est::ctc
