// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "e2est/autodiff.hpp"
#include "e2est/tensor.hpp"

/// Connectionist temporal classification.
///
/// Frame scores are (frames x (V + 1)) log-probabilities whose last column is
/// the blank symbol. Labels are ids in [0, V). All dynamic programming runs in
/// log space.
namespace e2est::ctc {

/// Forward/backward tables over the blank-interleaved label sequence.
/// Both tables include the emission score of their own frame.
struct CtcLattice {
  std::vector<std::size_t> extended;  // blank, l1, blank, l2, ..., blank (2J + 1)
  Tensor log_alpha;                   // frames x (2J + 1)
  Tensor log_beta;                    // frames x (2J + 1)
  double log_prob_forward = 0.0;
  double log_prob_backward = 0.0;
};

/// Fewest frames any alignment of `target` needs: J plus one separating blank
/// per adjacent repeated label.
std::size_t min_frames(std::span<const std::size_t> target);

/// Throws CtcInfeasibleError when no alignment fits into `frames` frames.
void check_feasible(std::span<const std::size_t> target, std::size_t frames);

CtcLattice forward_backward(const Tensor& frame_logprobs, std::span<const std::size_t> target);

/// -log p_ctc(target | frames).
double ctc_loss(const Tensor& frame_logprobs, std::span<const std::size_t> target);

/// d(-log p_ctc) / d frame_logprobs, i.e. minus the per-frame label occupancy.
Tensor ctc_grad(const Tensor& frame_logprobs, std::span<const std::size_t> target);

/// Sum over all (V + 1)^frames paths that collapse to `target`, computed by
/// enumeration. Limited to 10^6 paths.
double ctc_brute_force(const Tensor& frame_probs, std::span<const std::size_t> target);

/// Batched CTC loss on a time-major stack of frame log-probabilities
/// ((steps * batch) x (V + 1)); returns the sum of -log p_ctc over the batch.
Var ctc_loss(Graph& g, Var frame_logprobs, std::size_t batch, std::span<const std::size_t> lengths,
             const std::vector<std::vector<std::size_t>>& targets);

}  // namespace e2est::ctc
