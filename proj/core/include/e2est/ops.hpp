// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "e2est/autodiff.hpp"

/// Differentiable operations on rank-2 values.
///
/// Sequence-valued ops take time-major stacks: row `t * batch + b` is step
/// `t` of batch element `b`, and `lengths[b]` marks how many leading steps
/// of element `b` are real. Rows past a length are padding; ops that reduce
/// over time never read them.
namespace e2est::ops {

Var matmul(Graph& g, Var a, Var b);
Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);
/// a + row, with `row` (1 x cols) broadcast over the rows of `a`.
Var add_row(Graph& g, Var a, Var row);
Var scale(Graph& g, Var a, double s);
Var sigmoid(Graph& g, Var a);
Var tanh(Graph& g, Var a);
/// Sum of all entries, as a 1x1 value.
Var sum(Graph& g, Var a);

Var concat_cols(Graph& g, const std::vector<Var>& parts);
Var slice_cols(Graph& g, Var a, std::size_t begin, std::size_t count);
Var concat_rows(Graph& g, const std::vector<Var>& parts);
Var slice_rows(Graph& g, Var a, std::size_t begin, std::size_t count);

/// Row lookup; the gradient is scattered back to the looked-up rows only.
Var gather_rows(Graph& g, Var table, std::span<const std::size_t> ids);
/// Multiplies row r of `a` by the constant weights[r].
Var scale_rows(Graph& g, Var a, std::span<const double> weights);
/// Elementwise product with a constant tensor of the same shape.
Var mul_const(Graph& g, Var a, const Tensor& c);
/// Re-indexes the batch dimension of a time-major stack:
/// out[t * index.size() + j] = a[t * old_batch + index[j]].
Var select_batch(Graph& g, Var a, std::size_t steps, std::size_t old_batch, std::span<const std::size_t> index);

Var log_softmax_rows(Graph& g, Var a);

/// Sum over rows with targets[r] >= 0 of the label-smoothed cross entropy
/// -sum_v q_v logp[r, v] with q = (1 - eps) onehot(targets[r]) + eps / V.
Var smoothed_nll(Graph& g, Var logp, std::span<const int> targets, double eps);

/// LSTM cell on pre-activations laid out as [input | forget | candidate | output].
/// Returns [h | c] of shape (batch x 2H).
Var lstm_cell(Graph& g, Var gates, Var c_prev);

/// Elementwise max over non-overlapping windows of `pool` steps. A trailing
/// partial window forms its own window. `out_lengths` receives ceil(len / pool).
Var max_pool_time(Graph& g, Var x, std::size_t batch, std::span<const std::size_t> lengths, std::size_t pool,
                  std::vector<std::size_t>& out_lengths);

/// Additive attention energies
///   e[b, t] = v^T tanh(keys[t * B + b] + query[b] + feedback[b, t] * u + bias)
/// for t < lengths[b] (0 elsewhere). keys: (T*B x A), query: (B x A),
/// feedback: (B x T), u and bias: (1 x A), v: (A x 1). Result is (B x T).
Var attention_energies(Graph& g, Var keys, Var query, Var feedback, Var u, Var bias, Var v, std::size_t batch,
                       std::span<const std::size_t> lengths);

/// Row softmax restricted to the first lengths[b] columns; zeros elsewhere.
Var masked_softmax(Graph& g, Var energies, std::span<const std::size_t> lengths);

/// c[b] = sum_t alpha[b, t] * memory[t * B + b]; alpha: (B x T), memory: (T*B x M).
Var attention_context(Graph& g, Var alpha, Var memory, std::size_t batch);

}  // namespace e2est::ops
