// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#include "e2est/layers.hpp"

#include <algorithm>
#include <cmath>

#include "e2est/errors.hpp"

namespace e2est::layers {

LstmParams bind_lstm(Graph& g, const ParamStore& store, const std::string& prefix) {
  return {g.param(store, prefix + ".w_ih"), g.param(store, prefix + ".w_hh"), g.param(store, prefix + ".b")};
}

LstmState zero_lstm_state(Graph& g, std::size_t batch, std::size_t hidden) {
  Var z = g.constant(Tensor::matrix(batch, hidden));
  return {z, z};
}

namespace {

LstmState cell_from_gates(Graph& g, Var gates, Var c_prev, std::size_t hidden) {
  Var hc = ops::lstm_cell(g, gates, c_prev);
  return {ops::slice_cols(g, hc, 0, hidden), ops::slice_cols(g, hc, hidden, hidden)};
}

}  // namespace

LstmState lstm_step(Graph& g, Var x, const LstmState& state, const LstmParams& p) {
  const std::size_t hidden = g.value(p.w_hh).rows();
  if (g.value(state.h).cols() != hidden || g.value(state.c).cols() != hidden) {
    throw ShapeError("lstm_step: state width does not match hidden size " + std::to_string(hidden));
  }
  Var gates = ops::add_row(g, ops::add(g, ops::matmul(g, x, p.w_ih), ops::matmul(g, state.h, p.w_hh)), p.b);
  return cell_from_gates(g, gates, state.c, hidden);
}

SeqBatch lstm_sequence(Graph& g, const SeqBatch& xs, const LstmParams& p, bool reverse) {
  if (xs.steps == 0 || xs.batch == 0) throw ShapeError("lstm_sequence: empty sequence");
  const std::size_t hidden = g.value(p.w_hh).rows();
  const std::size_t batch = xs.batch;
  // Input projection for every step at once.
  Var proj = ops::add_row(g, ops::matmul(g, xs.states, p.w_ih), p.b);

  LstmState state = zero_lstm_state(g, batch, hidden);
  std::vector<Var> outs(xs.steps);
  std::vector<double> mask(batch);
  for (std::size_t k = 0; k < xs.steps; ++k) {
    const std::size_t t = reverse ? xs.steps - 1 - k : k;
    Var gates = ops::add(g, ops::slice_rows(g, proj, t * batch, batch), ops::matmul(g, state.h, p.w_hh));
    Var hc = ops::lstm_cell(g, gates, state.c);
    bool padded = false;
    for (std::size_t b = 0; b < batch; ++b) {
      mask[b] = t < xs.lengths[b] ? 1.0 : 0.0;
      padded = padded || mask[b] == 0.0;
    }
    if (padded) hc = ops::scale_rows(g, hc, mask);
    state = {ops::slice_cols(g, hc, 0, hidden), ops::slice_cols(g, hc, hidden, hidden)};
    outs[t] = state.h;
  }
  return {ops::concat_rows(g, outs), batch, xs.steps, xs.lengths};
}

SeqBatch blstm(Graph& g, const SeqBatch& xs, const LstmParams& fw, const LstmParams& bw) {
  SeqBatch f = lstm_sequence(g, xs, fw, false);
  SeqBatch b = lstm_sequence(g, xs, bw, true);
  return {ops::concat_cols(g, {f.states, b.states}), xs.batch, xs.steps, xs.lengths};
}

SeqBatch max_pool_time(Graph& g, const SeqBatch& xs, std::size_t pool) {
  std::vector<std::size_t> out_lengths;
  Var out = ops::max_pool_time(g, xs.states, xs.batch, xs.lengths, pool, out_lengths);
  const std::size_t steps = (xs.steps + pool - 1) / pool;
  return {out, xs.batch, steps, std::move(out_lengths)};
}

std::size_t pooled_length(std::size_t length, std::size_t pools) {
  for (std::size_t i = 0; i < pools; ++i) length = (length + 1) / 2;
  return length;
}

AttentionParams bind_attention(Graph& g, const ParamStore& store, const std::string& prefix) {
  return {g.param(store, prefix + ".w_query"), g.param(store, prefix + ".w_key"), g.param(store, prefix + ".u"),
          g.param(store, prefix + ".b"), g.param(store, prefix + ".v")};
}

Memory make_memory(Graph& g, const SeqBatch& seq, const AttentionParams& p) {
  return {seq, ops::matmul(g, seq.states, p.w_key)};
}

Var zero_feedback(Graph& g, const Memory& mem) { return g.constant(Tensor::matrix(mem.seq.batch, mem.seq.steps)); }

AttentionState additive_attention(Graph& g, Var s_prev, const Memory& mem, Var feedback, const AttentionParams& p) {
  if (mem.seq.steps == 0) throw ShapeError("additive_attention: empty memory");
  Var query = ops::matmul(g, s_prev, p.w_query);
  Var energies =
      ops::attention_energies(g, mem.keys, query, feedback, p.u, p.b, p.v, mem.seq.batch, mem.seq.lengths);
  Var alpha = ops::masked_softmax(g, energies, mem.seq.lengths);
  Var context = ops::attention_context(g, alpha, mem.seq.states, mem.seq.batch);
  return {alpha, context, ops::add(g, feedback, alpha)};
}

Var output_logprobs(Graph& g, Var e_prev, Var s_prev, Var context, Var w, Var b) {
  Var in = ops::concat_cols(g, {e_prev, s_prev, context});
  return ops::log_softmax_rows(g, ops::add_row(g, ops::matmul(g, in, w), b));
}

Tensor probabilities(const Tensor& logprobs) {
  Tensor out = logprobs;
  for (double& v : out.storage()) v = std::exp(v);
  return out;
}

Var label_smoothed_ce(Graph& g, Var logprobs, std::span<const int> targets, double eps) {
  return ops::smoothed_nll(g, logprobs, targets, eps);
}

double label_smoothed_ce(std::span<const double> pred, std::size_t target, double eps, bool* clamped) {
  constexpr double kMinProb = 1e-300;
  if (target >= pred.size()) throw ShapeError("label_smoothed_ce: target id out of range");
  if (eps < 0.0 || eps >= 1.0) throw ShapeError("label_smoothed_ce: smoothing must lie in [0, 1)");
  const double v = static_cast<double>(pred.size());
  bool hit = false;
  double loss = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double q = (k == target ? 1.0 - eps : 0.0) + eps / v;
    if (q == 0.0) continue;
    double p = pred[k];
    if (p < kMinProb) {
      p = kMinProb;
      hit = true;
    }
    loss -= q * std::log(p);
  }
  if (clamped) *clamped = hit;
  return loss;
}

Var dropout(Graph& g, Var x, double rate, bool training, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ShapeError("dropout: rate must lie in [0, 1)");
  if (!training || rate == 0.0) return x;
  const Tensor& xv = g.value(x);
  Tensor mask(xv.shape());
  const double keep = 1.0 / (1.0 - rate);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& m : mask.storage()) m = u(rng) < rate ? 0.0 : keep;
  return ops::mul_const(g, x, mask);
}

Var embed(Graph& g, Var table, std::span<const std::size_t> ids) { return ops::gather_rows(g, table, ids); }

}  // namespace e2est::layers
