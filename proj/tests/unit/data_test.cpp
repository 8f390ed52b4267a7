// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "e2est/ctc.hpp"
#include "e2est/data.hpp"
#include "e2est/errors.hpp"
#include "e2est/layers.hpp"
#include "e2est/vocab.hpp"
#include "test_util.hpp"

namespace e2est {
namespace {

TEST(Vocabulary, ReservedIdsAndBlank) {
  Vocabulary v = Vocabulary::synthetic("f", 4);
  EXPECT_EQ(v.size(), 8u);
  EXPECT_EQ(v.blank(), 7u);
  EXPECT_EQ(v.output_size(), 7u);
  EXPECT_EQ(v.token(Vocabulary::kEos), "</s>");
  EXPECT_TRUE(v.is_content(3));
  EXPECT_FALSE(v.is_content(v.blank()));
  EXPECT_EQ(v.parse(v.join(TokenIds{3, 4, 6})), (TokenIds{3, 4, 6}));
  EXPECT_EQ(v.join(TokenIds{1, 3, 2}), v.token(3));
  EXPECT_THROW(v.parse("</s>"), DataError);
  EXPECT_THROW(v.parse("nope"), DataError);
}

TEST(Generate, FrameCountFollowsTokensTimesRate) {
  GenerationParams p;
  p.n_examples = 3;
  p.min_len = p.max_len = 5;
  p.min_frames_per_token = p.max_frames_per_token = 2;
  Dataset d = generate(p);
  for (const auto& ex : d.examples) {
    EXPECT_EQ(ex.transcript.size(), 5u);
    EXPECT_EQ(ex.num_frames(), 10u);
    EXPECT_EQ(ex.frames.cols(), p.vocab_size);
  }
}

TEST(Generate, DeterministicGivenSeed) {
  GenerationParams p;
  p.n_examples = 20;
  Dataset a = generate(p), b = generate(p);
  ASSERT_EQ(a.examples.size(), b.examples.size());
  for (std::size_t i = 0; i < a.examples.size(); ++i) {
    EXPECT_EQ(a.examples[i].frames, b.examples[i].frames);
    EXPECT_EQ(a.examples[i].transcript, b.examples[i].transcript);
    EXPECT_EQ(a.examples[i].translation, b.examples[i].translation);
  }
  p.seed = 2;
  EXPECT_NE(generate(p).examples[0].frames, a.examples[0].frames);
}

TEST(Generate, NoiselessFramesAreOneHotsOfTheTranscript) {
  GenerationParams p;
  p.n_examples = 10;
  p.noise_sigma = 0.0;
  Dataset d = generate(p);
  for (const auto& ex : d.examples) {
    TokenIds decoded;
    for (std::size_t t = 0; t < ex.num_frames(); ++t) {
      std::size_t arg = 0;
      for (std::size_t k = 1; k < ex.frames.cols(); ++k) {
        if (ex.frames(t, k) > ex.frames(t, arg)) arg = k;
      }
      EXPECT_EQ(ex.frames(t, arg), 1.0);
      decoded.push_back(arg + Vocabulary::kFirstContent);
    }
    // Runs of identical frame labels collapse onto the transcript only when
    // tokens do not repeat; compare frame-by-frame coverage instead.
    TokenIds collapsed;
    for (std::size_t t : decoded) {
      if (collapsed.empty() || collapsed.back() != t) collapsed.push_back(t);
    }
    TokenIds merged;
    for (std::size_t t : ex.transcript) {
      if (merged.empty() || merged.back() != t) merged.push_back(t);
    }
    EXPECT_EQ(collapsed, merged);
  }
}

TEST(Generate, CipherOfReversalInvariant) {
  GenerationParams p;
  p.n_examples = 50;
  Dataset d = generate(p);
  std::set<std::size_t> seen(d.cipher.begin(), d.cipher.end());
  EXPECT_EQ(seen.size(), p.vocab_size);
  for (const auto& ex : d.examples) {
    TokenIds back = decipher(ex.translation, d.cipher);
    std::reverse(back.begin(), back.end());
    EXPECT_EQ(back, ex.transcript);
    EXPECT_GT(ex.num_frames(), ex.transcript.size());
    EXPECT_GE(ex.num_frames(), 2 * ex.transcript.size());
    for (std::size_t t : ex.transcript) EXPECT_TRUE(d.source.is_content(t));
    for (std::size_t t : ex.translation) EXPECT_TRUE(d.target.is_content(t));
  }
}

TEST(Generate, InfeasibleRangesAreRejected) {
  GenerationParams p;
  p.vocab_size = 3;
  EXPECT_THROW(generate(p), DataError);
  p = {};
  p.min_len = 5;
  p.max_len = 4;
  EXPECT_THROW(generate(p), DataError);
  p = {};
  p.min_frames_per_token = 1;
  EXPECT_THROW(generate(p), DataError);
}

TEST(Batching, DefaultFilterCountsAddUp) {
  Dataset d = generate(GenerationParams{});
  BatchOptions o;
  FilterReport r;
  auto batches = make_batches(d.examples, o, &r);
  EXPECT_EQ(r.too_long, 0u);
  std::size_t n = 0;
  for (const auto& b : batches) n += b.batch;
  EXPECT_EQ(n, r.kept);
  EXPECT_EQ(r.kept + r.ctc_infeasible, d.examples.size());
}

TEST(Batching, FiltersLongAndCtcInfeasibleExamples) {
  GenerationParams p;
  p.n_examples = 40;
  p.min_len = 3;
  p.max_len = 8;
  p.min_frames_per_token = 2;
  p.max_frames_per_token = 2;
  Dataset d = generate(p);
  BatchOptions o;
  o.pools = 3;  // T' = ceil(2J / 8) < J: every example infeasible
  FilterReport r;
  EXPECT_THROW(make_batches(d.examples, o, &r), DataError);
  o.pools = 1;  // T' = J: feasible only without repeated tokens
  auto kept = filter_examples(d.examples, o, &r);
  for (const auto& ex : kept) {
    EXPECT_LE(ctc::min_frames(ex.transcript), layers::pooled_length(ex.num_frames(), 1));
  }
  EXPECT_EQ(r.kept + r.ctc_infeasible, d.examples.size());
  o.max_len = 4;
  o.check_ctc = false;
  kept = filter_examples(d.examples, o, &r);
  for (const auto& ex : kept) EXPECT_LE(ex.transcript.size(), 4u);
  EXPECT_GT(r.too_long, 0u);
}

TEST(Batching, CollateLayoutAndPadding) {
  Dataset d = generate(testing::tiny_generation());
  Batch b = testing::tiny_batch(d, 0, 3, 2);
  std::size_t longest = 0;
  for (std::size_t i = 0; i < 3; ++i) longest = std::max(longest, d.examples[i].num_frames());
  EXPECT_EQ(b.steps, longest + 2);
  EXPECT_EQ(b.frames.rows(), b.steps * 3);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(b.frame_lengths[i], d.examples[i].num_frames());
    for (std::size_t t = 0; t < b.steps; ++t) {
      for (std::size_t k = 0; k < b.feature_dim; ++k) {
        const double want = t < b.frame_lengths[i] ? d.examples[i].frames(t, k) : 0.0;
        EXPECT_EQ(b.frames(t * 3 + i, k), want);
      }
    }
  }
}

TEST(Split, FractionsAndDeterminism) {
  Dataset d = generate(GenerationParams{});
  Splits all = split(d.examples, {1.0, 0.0, 0.0}, 1);
  EXPECT_EQ(all.train.size(), d.examples.size());
  EXPECT_TRUE(all.dev.empty());
  Splits a = split(d.examples, {0.8, 0.1, 0.1}, 4), b = split(d.examples, {0.8, 0.1, 0.1}, 4);
  EXPECT_EQ(a.train.size(), 480u);
  EXPECT_EQ(a.dev.size(), 60u);
  std::set<std::string> ids;
  for (const auto* part : {&a.train, &a.dev, &a.test}) {
    for (const auto& ex : *part) EXPECT_TRUE(ids.insert(ex.id).second);
  }
  EXPECT_EQ(ids.size(), d.examples.size());
  for (std::size_t i = 0; i < a.dev.size(); ++i) EXPECT_EQ(a.dev[i].id, b.dev[i].id);
  EXPECT_THROW(split(d.examples, {0.5, 0.2, 0.2}, 1), DataError);
  EXPECT_THROW(split(std::span<const ExamplePair>(d.examples.data(), 3), {0.9, 0.05, 0.05}, 1), DataError);
}

TEST(Files, ExamplesAndManifestRoundTrip) {
  Dataset d = generate(testing::tiny_generation());
  const auto dir = std::filesystem::temp_directory_path() / "e2est_data_test";
  std::filesystem::create_directories(dir);
  write_examples(dir / "x.tsv", d.examples, d.source, d.target);
  auto back = read_examples(dir / "x.tsv", d.source, d.target);
  ASSERT_EQ(back.size(), d.examples.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].id, d.examples[i].id);
    EXPECT_EQ(back[i].frames, d.examples[i].frames);
    EXPECT_EQ(back[i].transcript, d.examples[i].transcript);
    EXPECT_EQ(back[i].translation, d.examples[i].translation);
  }
  write_manifest(dir / "manifest.json", d);
  GenerationParams p = read_manifest(dir / "manifest.json");
  EXPECT_EQ(p.seed, d.params.seed);
  EXPECT_EQ(p.noise_sigma, d.params.noise_sigma);
  EXPECT_THROW(read_examples(dir / "missing.tsv", d.source, d.target), IoError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace e2est
