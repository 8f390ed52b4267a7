// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "e2est/ctc.hpp"
#include "e2est/decode.hpp"
#include "e2est/layers.hpp"
#include "e2est/metrics.hpp"
#include "e2est/model.hpp"
#include "e2est/ops.hpp"

namespace {

using namespace e2est;

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.storage()) v = u(rng);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  for (auto _ : state) {
    Graph g(false);
    benchmark::DoNotOptimize(g.value(ops::matmul(g, g.constant(a), g.constant(b))));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(128);

void BM_BlstmForwardBackward(benchmark::State& state) {
  const std::size_t steps = static_cast<std::size_t>(state.range(0)), batch = 8, in = 12, hidden = 64;
  ParamStore s(1);
  for (const char* dir : {"fw", "bw"}) {
    const std::string p = dir;
    s.add(p + ".w_ih", random_matrix(in, 4 * hidden, 3));
    s.add(p + ".w_hh", random_matrix(hidden, 4 * hidden, 4));
    s.add(p + ".b", Tensor::matrix(1, 4 * hidden));
  }
  const Tensor x = random_matrix(steps * batch, in, 5);
  for (auto _ : state) {
    Graph g;
    layers::SeqBatch xs{g.constant(x), batch, steps, std::vector<std::size_t>(batch, steps)};
    auto h = layers::blstm(g, xs, layers::bind_lstm(g, s, "fw"), layers::bind_lstm(g, s, "bw"));
    benchmark::DoNotOptimize(g.backward(ops::sum(g, h.states), s));
  }
}
BENCHMARK(BM_BlstmForwardBackward)->Arg(20)->Arg(80);

void BM_CtcLossAndGrad(benchmark::State& state) {
  const auto T = static_cast<std::size_t>(state.range(0));
  Tensor lp = random_matrix(T, 13, 6);
  for (std::size_t t = 0; t < T; ++t) {
    double z = 0;
    for (std::size_t k = 0; k < 13; ++k) z += std::exp(lp(t, k));
    for (std::size_t k = 0; k < 13; ++k) lp(t, k) -= std::log(z);
  }
  std::vector<std::size_t> target;
  for (std::size_t j = 0; j < T / 3; ++j) target.push_back(j % 12);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ctc::ctc_loss(lp, target));
    benchmark::DoNotOptimize(ctc::ctc_grad(lp, target));
  }
}
BENCHMARK(BM_CtcLossAndGrad)->Arg(24)->Arg(96);

void BM_BeamDecode(benchmark::State& state) {
  ModelConfig c;
  ModelGraph graph = build(c, Topology::kDirect);
  ParamStore s = init_store(graph, 7);
  DecodeInput in;
  in.frames = random_matrix(60, c.feature_dim, 8);
  DecodeOptions o;
  o.beam = static_cast<std::size_t>(state.range(0));
  o.max_len = 12;
  for (auto _ : state) benchmark::DoNotOptimize(beam_decode(graph, s, in, o));
}
BENCHMARK(BM_BeamDecode)->Arg(1)->Arg(12);

void BM_Ter(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(9);
  Words hyp, ref;
  for (std::size_t i = 0; i < n; ++i) {
    ref.push_back("w" + std::to_string(rng() % 12));
    hyp.push_back(rng() % 4 ? ref.back() : "w" + std::to_string(rng() % 12));
  }
  std::rotate(hyp.begin(), hyp.begin() + static_cast<std::ptrdiff_t>(n / 3), hyp.end());
  for (auto _ : state) benchmark::DoNotOptimize(ter_edits(hyp, ref));
}
BENCHMARK(BM_Ter)->Arg(10)->Arg(40);

}  // namespace

BENCHMARK_MAIN();
