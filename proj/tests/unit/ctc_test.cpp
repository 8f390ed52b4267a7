// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "e2est/ctc.hpp"
#include "e2est/errors.hpp"
#include "e2est/ops.hpp"
#include "test_util.hpp"

namespace e2est {
namespace {

Tensor random_logprobs(std::size_t frames, std::size_t cols, std::mt19937_64& rng) {
  Graph g(false);
  Tensor logits = testing::random_tensor(frames, cols, rng, 2.0);
  return g.value(ops::log_softmax_rows(g, g.constant(logits)));
}

Tensor exp_of(const Tensor& t) {
  Tensor out = t;
  for (double& v : out.storage()) v = std::exp(v);
  return out;
}

TEST(Ctc, SingleFrameSingleLabel) {
  Tensor lp = Tensor::from_rows({{std::log(0.3), std::log(0.7)}});
  EXPECT_NEAR(ctc::ctc_loss(lp, std::vector<std::size_t>{0}), -std::log(0.3), 1e-15);
}

TEST(Ctc, TwoFramesUniform) {
  const double h = std::log(0.5);
  Tensor lp = Tensor::from_rows({{h, h}, {h, h}});
  EXPECT_NEAR(ctc::ctc_loss(lp, std::vector<std::size_t>{0}), -std::log(0.75), 1e-15);
}

TEST(Ctc, RepeatedLabelNeedsSeparatingBlank) {
  const double h = std::log(0.5);
  Tensor lp = Tensor::from_rows({{h, h}, {h, h}});
  EXPECT_EQ(ctc::min_frames(std::vector<std::size_t>{0, 0}), 3u);
  EXPECT_THROW(ctc::ctc_loss(lp, std::vector<std::size_t>{0, 0}), CtcInfeasibleError);
}

TEST(Ctc, BruteForceEdgeCases) {
  Tensor certain = Tensor::from_rows({{1.0, 0.0}});
  EXPECT_EQ(ctc::ctc_brute_force(certain, std::vector<std::size_t>{0}), 1.0);
  Tensor p = Tensor::from_rows({{0.5, 0.5}, {0.5, 0.5}});
  EXPECT_EQ(ctc::ctc_brute_force(p, std::vector<std::size_t>{0, 0, 0}), 0.0);
  Tensor big = Tensor::matrix(12, 5, 0.2);
  EXPECT_THROW(ctc::ctc_brute_force(big, std::vector<std::size_t>{0}), ShapeError);
}

TEST(Ctc, MatchesBruteForceOnRandomInstances) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::size_t> frames_d(1, 6), vocab_d(1, 4), len_d(1, 3);
  int checked = 0;
  while (checked < 200) {
    const std::size_t T = frames_d(rng), V = vocab_d(rng), J = len_d(rng);
    std::uniform_int_distribution<std::size_t> tok(0, V - 1);
    std::vector<std::size_t> target(J);
    for (auto& t : target) t = tok(rng);
    if (ctc::min_frames(target) > T) continue;
    Tensor lp = random_logprobs(T, V + 1, rng);
    const double p = ctc::ctc_brute_force(exp_of(lp), target);
    EXPECT_NEAR(ctc::ctc_loss(lp, target), -std::log(p), 1e-9);
    ++checked;
  }
}

TEST(Ctc, LatticeForwardEqualsBackward) {
  std::mt19937_64 rng(2);
  Tensor lp = random_logprobs(9, 4, rng);
  std::vector<std::size_t> target{0, 2, 2, 1};
  auto lat = ctc::forward_backward(lp, target);
  EXPECT_EQ(lat.extended.size(), 9u);
  EXPECT_NEAR(lat.log_prob_forward, lat.log_prob_backward, 1e-9);
}

TEST(Ctc, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor lp = random_logprobs(5, 4, rng);
    std::vector<std::size_t> target{1, 0};
    Tensor grad = ctc::ctc_grad(lp, target);
    for (std::size_t i = 0; i < lp.size(); ++i) {
      Tensor up = lp, down = lp;
      up[i] += 1e-6;
      down[i] -= 1e-6;
      const double fd = (ctc::ctc_loss(up, target) - ctc::ctc_loss(down, target)) / 2e-6;
      EXPECT_NEAR(grad[i], fd, 1e-6);
    }
  }
}

TEST(Ctc, SoftmaxComposedGradientSumsToZeroPerFrame) {
  std::mt19937_64 rng(4);
  ParamStore s;
  s.add("logits", testing::random_tensor(6, 4, rng, 2.0));
  Graph g;
  Var lp = ops::log_softmax_rows(g, g.param(s, "logits"));
  std::vector<std::size_t> lengths{6};
  Var loss = ctc::ctc_loss(g, lp, 1, lengths, {{0, 2}});
  GradMap gm = g.backward(loss, s);
  for (std::size_t t = 0; t < 6; ++t) {
    double sum = 0;
    for (std::size_t k = 0; k < 4; ++k) sum += gm.at("logits")(t, k);
    EXPECT_NEAR(sum, 0.0, 1e-12);
  }
}

TEST(Ctc, UnusedLabelsGetOnlyNormalizationGradient) {
  // With a 1-frame lattice only the target column carries gradient.
  std::mt19937_64 rng(5);
  Tensor lp = random_logprobs(1, 4, rng);
  Tensor grad = ctc::ctc_grad(lp, std::vector<std::size_t>{1});
  EXPECT_EQ(grad(0, 0), 0.0);
  EXPECT_EQ(grad(0, 2), 0.0);
  EXPECT_EQ(grad(0, 3), 0.0);
  EXPECT_NEAR(grad(0, 1), -1.0, 1e-12);
}

TEST(Ctc, PermutationCovariance) {
  std::mt19937_64 rng(6);
  Tensor lp = random_logprobs(7, 4, rng);
  std::vector<std::size_t> perm{2, 0, 1};  // blank (column 3) stays put
  Tensor permuted = lp;
  for (std::size_t t = 0; t < 7; ++t) {
    for (std::size_t k = 0; k < 3; ++k) permuted(t, perm[k]) = lp(t, k);
  }
  std::vector<std::size_t> target{0, 1, 1}, mapped{perm[0], perm[1], perm[1]};
  EXPECT_NEAR(ctc::ctc_loss(lp, target), ctc::ctc_loss(permuted, mapped), 1e-12);
}

TEST(Ctc, LongSequencesStayFinite) {
  const std::size_t T = 1000;
  Tensor lp = Tensor::matrix(T, 3, std::log(1e-30));
  for (std::size_t t = 0; t < T; ++t) lp(t, 2) = std::log(1.0 - 2e-30);
  const double loss = ctc::ctc_loss(lp, std::vector<std::size_t>{0, 1});
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_GT(loss, 100.0);
}

TEST(Ctc, BatchedLossIsSumOfExamples) {
  std::mt19937_64 rng(7);
  Tensor a = random_logprobs(5, 4, rng), b = random_logprobs(3, 4, rng);
  Tensor stacked = Tensor::matrix(10, 4);
  for (std::size_t t = 0; t < 5; ++t) {
    for (std::size_t k = 0; k < 4; ++k) {
      stacked(t * 2, k) = a(t, k);
      stacked(t * 2 + 1, k) = t < 3 ? b(t, k) : 0.0;
    }
  }
  Graph g(false);
  std::vector<std::size_t> lengths{5, 3};
  Var loss = ctc::ctc_loss(g, g.constant(stacked), 2, lengths, {{0, 1}, {2}});
  EXPECT_NEAR(g.value(loss).item(),
              ctc::ctc_loss(a, std::vector<std::size_t>{0, 1}) + ctc::ctc_loss(b, std::vector<std::size_t>{2}), 1e-12);
}

}  // namespace
}  // namespace e2est
