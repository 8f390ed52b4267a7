// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "e2est/decode.hpp"
#include "e2est/errors.hpp"
#include "test_util.hpp"

namespace e2est {
namespace {

using testing::tiny_batch;
using testing::tiny_config;
using testing::tiny_generation;

DecodeInput speech_input(const ExamplePair& ex) {
  DecodeInput in;
  in.frames = ex.frames;
  return in;
}

struct Fixture {
  Dataset ds = generate(tiny_generation());
  ModelConfig c = tiny_config();
};

// Random weights are too flat to give interesting searches; scale them up.
ParamStore sharpened(const ModelGraph& g, std::uint64_t seed, double factor = 4.0) {
  ParamStore s = init_store(g, seed);
  for (auto& [name, t] : s) {
    for (double& v : t.storage()) v *= factor;
  }
  return s;
}

TEST(Decode, BeamOneMatchesGreedy) {
  Fixture f;
  for (Topology t : {Topology::kDirect, Topology::kAsr, Topology::kTiedTriangle}) {
    ModelGraph g = build(f.c, t);
    ParamStore s = sharpened(g, 5);
    for (const auto& ex : f.ds.examples) {
      Hypothesis a = greedy_decode(g, s, speech_input(ex));
      Hypothesis b = beam_decode(g, s, speech_input(ex), {1, 0, 0.6});
      EXPECT_EQ(a.tokens, b.tokens);
      EXPECT_NEAR(a.log_prob, b.log_prob, 1e-12);
    }
    std::vector<Hypothesis> batched = decode_batch(g, s, tiny_batch(f.ds, 0, 6, 2), {1, 0, 0.6});
    for (std::size_t i = 0; i < 6; ++i) {
      Hypothesis single = greedy_decode(g, s, speech_input(f.ds.examples[i]));
      EXPECT_EQ(batched[i].tokens, single.tokens) << topology_name(t) << " " << i;
      EXPECT_NEAR(batched[i].log_prob, single.log_prob, 1e-9);
    }
  }
}

TEST(Decode, LogProbMatchesRescoring) {
  Fixture f;
  ModelGraph g = build(f.c, Topology::kDirect);
  ParamStore s = sharpened(g, 6);
  for (const auto& ex : f.ds.examples) {
    Hypothesis h = beam_decode(g, s, speech_input(ex), {4, 0, 0.6});
    EXPECT_NEAR(h.log_prob, sequence_log_prob(g, s, speech_input(ex), h.tokens), 1e-9);
  }
}

TEST(Decode, WideBeamFindsExhaustiveOptimum) {
  Fixture f;
  ModelGraph g = build(f.c, Topology::kDirect);
  const std::size_t V = f.c.target_vocab - 1;
  const std::size_t L = 3;
  for (std::uint64_t seed : {1, 2, 3}) {
    ParamStore s = sharpened(g, seed, 6.0);
    for (double alpha : {0.0, 0.6, 1.0}) {
      const DecodeInput in = speech_input(f.ds.examples[seed]);
      double best = -INFINITY;
      TokenIds best_seq, seq;
      std::function<void()> walk = [&] {
        if (seq.size() == L) return;
        for (std::size_t v = 0; v < V; ++v) {
          seq.push_back(v);
          if (v == Vocabulary::kEos) {
            const double score = sequence_log_prob(g, s, in, seq) / std::pow(double(seq.size()), alpha);
            if (score > best) best = score, best_seq = seq;
          } else {
            walk();
          }
          seq.pop_back();
        }
      };
      walk();
      Hypothesis h = beam_decode(g, s, in, {V * V * V, L, alpha});
      ASSERT_TRUE(h.finished);
      EXPECT_EQ(h.tokens, best_seq) << seed << " " << alpha;
    }
  }
}

TEST(Decode, MaxLenAndZeroParameterTies) {
  Fixture f;
  ModelGraph g = build(f.c, Topology::kDirect);
  ParamStore s = init_store(g, 1);
  for (auto& [name, t] : s) t.fill(0.0);
  const DecodeInput in = speech_input(f.ds.examples[0]);
  Hypothesis greedy = greedy_decode(g, s, in, 4);
  EXPECT_EQ(greedy.tokens, (TokenIds{0, 0, 0, 0}));
  EXPECT_FALSE(greedy.finished);
  EXPECT_NEAR(greedy.log_prob, -4 * std::log(7.0), 1e-12);
  Hypothesis beam = beam_decode(g, s, in, {3, 4, 0.6});
  EXPECT_EQ(beam.tokens, (TokenIds{Vocabulary::kEos}));
  Hypothesis one = beam_decode(g, s, in, {3, 1, 0.6});
  EXPECT_EQ(one.tokens.size(), 1u);
  EXPECT_THROW(beam_decode(g, s, in, {0, 0, 0.6}), ConfigError);
  DecodeInput text;
  text.text = {3, 4};
  EXPECT_THROW(greedy_decode(g, s, text), DataError);
}

TEST(Decode, DefaultLengthCapFollowsPooledFrames) {
  Fixture f;
  ModelConfig c = f.c;
  c.pools = 2;
  ModelGraph g = build(c, Topology::kDirect);
  ParamStore s = init_store(g, 1);
  for (auto& [name, t] : s) t.fill(0.0);
  const auto& ex = f.ds.examples[0];
  Hypothesis h = greedy_decode(g, s, speech_input(ex));
  EXPECT_EQ(h.tokens.size(), 2 * layers::pooled_length(ex.num_frames(), 2) + 5);
}

TEST(Decode, CascadeFeedsRecognizedTokensToTextModel) {
  Fixture f;
  ModelGraph asr = build(f.c, Topology::kAsr), mt = build(f.c, Topology::kMt);
  ParamStore sa = sharpened(asr, 3), sm = sharpened(mt, 4);
  DecodeOptions o{3, 0, 0.6};
  std::size_t nonempty = 0;
  for (const auto& ex : f.ds.examples) {
    CascadeResult r = cascade(asr, sa, mt, sm, ex.frames, o);
    EXPECT_EQ(r.transcript.tokens, beam_decode(asr, sa, speech_input(ex), o).tokens);
    TokenIds content = content_tokens(r.transcript, f.ds.source);
    EXPECT_EQ(r.empty_transcript, content.empty());
    if (content.empty()) continue;
    ++nonempty;
    DecodeInput text;
    text.text = content;
    EXPECT_EQ(r.translation.tokens, beam_decode(mt, sm, text, o).tokens);
  }
  EXPECT_THROW(cascade(mt, sm, asr, sa, f.ds.examples[0].frames, o), ConfigError);
  ModelConfig other = f.c;
  other.source_vocab = 9;
  ModelGraph mt9 = build(other, Topology::kMt);
  EXPECT_THROW(cascade(asr, sa, mt9, init_store(mt9, 1), f.ds.examples[0].frames, o), ConfigError);
}

TEST(Decode, ContentTokensDropReservedIds) {
  Vocabulary v = Vocabulary::synthetic("e", 4);
  Hypothesis h;
  h.tokens = {0, 3, 1, 6, 2};
  EXPECT_EQ(content_tokens(h, v), (TokenIds{3, 6}));
}

}  // namespace
}  // namespace e2est
