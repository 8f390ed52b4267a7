// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "e2est/autodiff.hpp"
#include "e2est/ops.hpp"

namespace e2est::layers {

/// A batch of variable-length sequences stacked time-major.
struct SeqBatch {
  Var states;  // (steps * batch) x dim
  std::size_t batch = 0;
  std::size_t steps = 0;
  std::vector<std::size_t> lengths;
};

/// One LSTM direction: w_ih (in x 4H), w_hh (H x 4H), b (1 x 4H).
struct LstmParams {
  Var w_ih, w_hh, b;
};

LstmParams bind_lstm(Graph& g, const ParamStore& store, const std::string& prefix);

struct LstmState {
  Var h, c;
};

LstmState zero_lstm_state(Graph& g, std::size_t batch, std::size_t hidden);

/// Single LSTM step with sigmoid input/forget/output gates and a tanh candidate.
LstmState lstm_step(Graph& g, Var x, const LstmState& state, const LstmParams& p);

/// Runs one direction over `xs`. Steps past a sequence's length produce zero
/// states, so a reversed pass starts every sequence from a zero state at its
/// own last frame.
SeqBatch lstm_sequence(Graph& g, const SeqBatch& xs, const LstmParams& p, bool reverse);

/// Forward and backward passes concatenated per step: (steps * batch) x 2H.
SeqBatch blstm(Graph& g, const SeqBatch& xs, const LstmParams& fw, const LstmParams& bw);

/// Non-overlapping max over `pool` steps with ceil semantics on each sequence.
SeqBatch max_pool_time(Graph& g, const SeqBatch& xs, std::size_t pool = 2);

/// Output length of `length` after `pools` successive 2-pools.
std::size_t pooled_length(std::size_t length, std::size_t pools);

/// w_query (D x A), w_key (M x A), u (1 x A), b (1 x A), v (A x 1).
struct AttentionParams {
  Var w_query, w_key, u, b, v;
};

AttentionParams bind_attention(Graph& g, const ParamStore& store, const std::string& prefix);

/// Attention memory with its keys projected once.
struct Memory {
  SeqBatch seq;
  Var keys;
};

Memory make_memory(Graph& g, const SeqBatch& seq, const AttentionParams& p);

struct AttentionState {
  Var weights;   // (batch x steps), rows sum to 1 over the valid prefix
  Var context;   // (batch x dim)
  Var feedback;  // accumulated weights including this step
};

/// All-zero feedback accumulator for `mem`.
Var zero_feedback(Graph& g, const Memory& mem);

/// Additive attention with cumulative-weight feedback:
/// e_t = v^T tanh(W s_prev + V h_t + u * feedback_t + b), alpha = softmax(e).
AttentionState additive_attention(Graph& g, Var s_prev, const Memory& mem, Var feedback, const AttentionParams& p);

/// log softmax(W [e_prev; s_prev; context] + b).
Var output_logprobs(Graph& g, Var e_prev, Var s_prev, Var context, Var w, Var b);

/// Probabilities from row log-probabilities.
Tensor probabilities(const Tensor& logprobs);

/// Summed label-smoothed cross entropy over rows; rows with target < 0 are skipped.
Var label_smoothed_ce(Graph& g, Var logprobs, std::span<const int> targets, double eps);

/// -sum_v q_v log pred_v for a plain probability vector. Zero probability on
/// the support of q is clamped to a large finite loss and reported via `clamped`.
double label_smoothed_ce(std::span<const double> pred, std::size_t target, double eps, bool* clamped = nullptr);

/// Inverted dropout; identity when `training` is false or rate is 0.
Var dropout(Graph& g, Var x, double rate, bool training, std::mt19937_64& rng);

Var embed(Graph& g, Var table, std::span<const std::size_t> ids);

}  // namespace e2est::layers
