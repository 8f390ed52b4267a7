// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "e2est/errors.hpp"
#include "e2est/metrics.hpp"

namespace e2est {
namespace {

// Independent corpus BLEU built from explicit n-gram string keys.
double reference_bleu(const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
  double match[4] = {0, 0, 0, 0}, total[4] = {0, 0, 0, 0}, rtotal[4] = {0, 0, 0, 0};
  double c = 0, r = 0;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    Words h = tokenize(hyps[s]), f = tokenize(refs[s]);
    c += h.size();
    r += f.size();
    for (int n = 1; n <= 4; ++n) {
      std::map<std::string, int> hc, rc;
      for (int i = 0; i + n <= static_cast<int>(h.size()); ++i) {
        std::string k;
        for (int j = 0; j < n; ++j) k += h[i + j] + "|";
        ++hc[k];
      }
      for (int i = 0; i + n <= static_cast<int>(f.size()); ++i) {
        std::string k;
        for (int j = 0; j < n; ++j) k += f[i + j] + "|";
        ++rc[k];
        ++rtotal[n - 1];
      }
      for (auto& [k, v] : hc) {
        total[n - 1] += v;
        match[n - 1] += std::min(v, rc[k]);
      }
    }
  }
  double logsum = 0;
  int orders = 0;
  for (int n = 0; n < 4; ++n) {
    if (total[n] == 0 && rtotal[n] == 0) continue;
    if (match[n] == 0) return 0.0;
    logsum += std::log(match[n] / total[n]);
    ++orders;
  }
  if (c == 0) return 0.0;
  const double bp = c >= r ? 1.0 : std::exp(1 - r / c);
  return 100.0 * bp * std::exp(logsum / orders);
}

// Minimum over all block-shift sequences (up to depth 2) of shifts + edit distance.
std::size_t exhaustive_ter_edits(const Words& hyp, const Words& ref) {
  std::size_t best = levenshtein(hyp, ref);
  std::vector<Words> frontier{hyp};
  std::set<Words> seen{hyp};
  for (std::size_t depth = 1; depth <= 2 && depth < best; ++depth) {
    std::vector<Words> next;
    for (const Words& w : frontier) {
      const std::size_t n = w.size();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t len = 1; i + len <= n; ++len) {
          Words block(w.begin() + i, w.begin() + i + len);
          Words rest;
          rest.insert(rest.end(), w.begin(), w.begin() + i);
          rest.insert(rest.end(), w.begin() + i + len, w.end());
          for (std::size_t at = 0; at <= rest.size(); ++at) {
            Words moved = rest;
            moved.insert(moved.begin() + at, block.begin(), block.end());
            if (!seen.insert(moved).second) continue;
            best = std::min(best, depth + levenshtein(moved, ref));
            next.push_back(moved);
          }
        }
      }
    }
    frontier.swap(next);
  }
  return best;
}

TEST(Bleu, IdenticalCorpusIsExactlyHundred) {
  std::vector<std::string> c{"a b c d e", "x y", "the cat sat on the mat"};
  EXPECT_EQ(bleu(c, c).bleu, 100.0);
}

TEST(Bleu, EmptyHypothesesScoreZero) {
  EXPECT_EQ(bleu({"", ""}, {"a b c", "d e"}).bleu, 0.0);
}

TEST(Bleu, SinglePairPrecisionsByHand) {
  auto r = bleu({"a b c d e"}, {"a b x d e"});
  EXPECT_DOUBLE_EQ(r.precisions[0], 4.0 / 5.0);
  EXPECT_DOUBLE_EQ(r.precisions[1], 2.0 / 4.0);
  // No hypothesis trigram occurs in the reference.
  EXPECT_EQ(r.matches[2], 0u);
  EXPECT_EQ(r.totals[2], 3u);
  EXPECT_EQ(r.brevity_penalty, 1.0);
  EXPECT_EQ(r.bleu, 0.0);
  EXPECT_DOUBLE_EQ(r.bleu, reference_bleu({"a b c d e"}, {"a b x d e"}));
}

TEST(Bleu, MatchesIndependentOracleOnRandomCorpora) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> len(0, 9), tok(0, 3), n_sent(1, 6);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> hyps, refs;
    const int n = n_sent(rng);
    for (int s = 0; s < n; ++s) {
      std::string h, r;
      for (int i = len(rng); i > 0; --i) h += std::string(1, static_cast<char>('a' + tok(rng))) + " ";
      for (int i = 1 + len(rng); i > 0; --i) r += std::string(1, static_cast<char>('a' + tok(rng))) + " ";
      hyps.push_back(h);
      refs.push_back(r);
    }
    EXPECT_NEAR(bleu(hyps, refs).bleu, reference_bleu(hyps, refs), 1e-9) << "trial " << trial;
  }
}

TEST(Bleu, PermutationInvariantOverCorpusOrder) {
  std::vector<std::string> h{"a b c", "d e f g", "a a b"}, r{"a b d", "d e f", "a b b"};
  const double base = bleu(h, r).bleu;
  std::vector<std::size_t> idx{2, 0, 1};
  std::vector<std::string> h2, r2;
  for (auto i : idx) {
    h2.push_back(h[i]);
    r2.push_back(r[i]);
  }
  EXPECT_EQ(bleu(h2, r2).bleu, base);
}

TEST(Bleu, ShortSentencesSkipOrdersAbsentOnBothSides) {
  EXPECT_EQ(bleu({"a b"}, {"a b"}).bleu, 100.0);
  EXPECT_LT(bleu({"a b"}, {"a b c d"}).bleu, 100.0);
}

TEST(Bleu, CaseFlag) {
  EXPECT_EQ(bleu({"A b"}, {"a B"}, false).bleu, 100.0);
  EXPECT_EQ(bleu({"A b"}, {"a B"}, true).bleu, 0.0);
}

TEST(Bleu, Errors) {
  EXPECT_THROW(bleu({}, {}), DataError);
  EXPECT_THROW(bleu({"a"}, {"a", "b"}), DataError);
}

TEST(Ter, SwapIsOneShift) {
  auto r = ter({"b a"}, {"a b"});
  EXPECT_EQ(r.percent, 50.0);
  auto e = ter_edits({"b", "a"}, {"a", "b"});
  EXPECT_EQ(e.shifts, 1u);
  EXPECT_EQ(e.total(), 1u);
}

TEST(Ter, IdenticalAndSubstitution) {
  EXPECT_EQ(ter({"a b c"}, {"a b c"}).percent, 0.0);
  EXPECT_NEAR(ter({"a x c"}, {"a b c"}).percent, 100.0 / 3.0, 1e-12);
  EXPECT_EQ(ter_edits({"a", "x", "c"}, {"a", "b", "c"}).shifts, 0u);
}

TEST(Ter, BlockShiftCountsOnce) {
  // Moving "c d e" to the front is one edit.
  auto e = ter_edits(tokenize("c d e a b"), tokenize("a b c d e"));
  EXPECT_EQ(e.total(), 1u);
}

TEST(Ter, RatioOfSumsAcrossCorpus) {
  auto r = ter({"a x c", "b a"}, {"a b c", "a b"});
  EXPECT_EQ(r.edits, 2u);
  EXPECT_EQ(r.ref_words, 5u);
  EXPECT_DOUBLE_EQ(r.percent, 40.0);
}

TEST(Ter, NeverWorseThanEditDistanceAndNeverBelowExhaustiveSearch) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> len(1, 5), tok(0, 2);
  for (int trial = 0; trial < 400; ++trial) {
    Words h, r;
    for (int i = len(rng); i > 0; --i) h.push_back(std::string(1, static_cast<char>('a' + tok(rng))));
    for (int i = len(rng); i > 0; --i) r.push_back(std::string(1, static_cast<char>('a' + tok(rng))));
    const std::size_t greedy = ter_edits(h, r).total();
    EXPECT_LE(greedy, levenshtein(h, r));
    EXPECT_GE(greedy, exhaustive_ter_edits(h, r));
  }
}

TEST(Ter, TinySwapsMatchExhaustiveOptimum) {
  for (auto [h, r] : std::vector<std::pair<std::string, std::string>>{
           {"b a", "a b"}, {"b c a", "a b c"}, {"c a b", "a b c"}, {"a c b", "a b c"}}) {
    EXPECT_EQ(ter_edits(tokenize(h), tokenize(r)).total(), exhaustive_ter_edits(tokenize(h), tokenize(r))) << h;
  }
}

TEST(Ter, EmptyReferenceCorpusIsAnError) {
  EXPECT_THROW(ter({"a"}, {""}), DataError);
}

TEST(Wer, SpecExamples) {
  EXPECT_EQ(wer({"a b c"}, {"a b c"}).percent, 0.0);
  EXPECT_DOUBLE_EQ(wer({"a b c"}, {"a c"}).percent, 50.0);
  EXPECT_NEAR(wer({"a x c"}, {"a b c"}).percent, 33.33, 0.01);
}

TEST(Wer, RatioOfSumsNotMeanOfRatios) {
  auto r = wer({"a", "a b c d"}, {"b", "a b c d"});
  EXPECT_DOUBLE_EQ(r.percent, 20.0);
}

TEST(Wer, EmptyReferenceCorpusIsAnError) {
  EXPECT_THROW(wer({"a", "b"}, {"", ""}), DataError);
}

TEST(Metrics, PureFunctions) {
  std::vector<std::string> h{"a b c d", "e f"}, r{"a c b d", "e g"};
  auto m1 = score_corpus(h, r, true, true);
  auto m2 = score_corpus(h, r, true, true);
  EXPECT_EQ(m1.to_json(), m2.to_json());
  EXPECT_TRUE(m1.wer.has_value());
}

}  // namespace
}  // namespace e2est
