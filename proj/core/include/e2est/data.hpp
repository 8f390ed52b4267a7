// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "e2est/tensor.hpp"
#include "e2est/vocab.hpp"

namespace e2est {

/// Synthetic task: a transcript f is drawn uniformly over the source
/// vocabulary, every token is rendered as r noisy one-hot frames, and the
/// translation is a fixed substitution cipher of reverse(f).
struct GenerationParams {
  std::uint64_t seed = 1;
  std::size_t n_examples = 600;
  std::size_t vocab_size = 12;
  std::size_t min_len = 3;
  std::size_t max_len = 8;
  std::size_t min_frames_per_token = 8;
  std::size_t max_frames_per_token = 12;
  double noise_sigma = 0.3;
};

struct ExamplePair {
  std::string id;
  Tensor frames;            // T x F
  TokenIds transcript;      // f, source vocabulary ids
  TokenIds translation;     // e, target vocabulary ids
  std::size_t num_frames() const { return frames.rows(); }
};

struct Dataset {
  GenerationParams params;
  Vocabulary source;
  Vocabulary target;
  std::vector<std::size_t> cipher;  // content index -> content index
  std::vector<ExamplePair> examples;
  std::size_t feature_dim() const { return params.vocab_size; }
};

/// The substitution cipher for a vocabulary size. Independent of the data seed.
std::vector<std::size_t> cipher_permutation(std::size_t vocab_size);
/// cipher(reverse(f)), mapping source ids to target ids.
TokenIds encipher(std::span<const std::size_t> transcript, std::span<const std::size_t> cipher);
/// Inverse substitution (no reversal), mapping target ids back to source ids.
TokenIds decipher(std::span<const std::size_t> translation, std::span<const std::size_t> cipher);

Dataset generate(const GenerationParams& params);

/// Padded, time-major batch.
struct Batch {
  std::vector<std::string> ids;
  std::size_t batch = 0;
  std::size_t steps = 0;
  std::size_t feature_dim = 0;
  Tensor frames;  // (steps * batch) x feature_dim; padding rows are zero
  std::vector<std::size_t> frame_lengths;
  std::vector<TokenIds> transcripts;
  std::vector<TokenIds> translations;
};

struct BatchOptions {
  std::size_t batch_size = 16;
  std::size_t max_len = 75;  // tokens, applied to transcript and translation
  std::size_t pools = 3;     // encoder 2-pools, for the CTC feasibility filter
  bool check_ctc = true;
  std::size_t extra_padding = 0;  // additional zero frames per batch
};

struct FilterReport {
  std::size_t kept = 0;
  std::size_t too_long = 0;
  std::size_t ctc_infeasible = 0;
};

/// Drops examples that are too long or CTC-infeasible after pooling.
/// Throws DataError when nothing survives.
std::vector<ExamplePair> filter_examples(std::span<const ExamplePair> examples, const BatchOptions& opts,
                                         FilterReport* report = nullptr);
Batch collate(std::span<const ExamplePair* const> items, std::size_t extra_padding = 0);
/// Filters, then cuts consecutive batches of opts.batch_size in dataset order.
std::vector<Batch> make_batches(std::span<const ExamplePair> examples, const BatchOptions& opts,
                                FilterReport* report = nullptr);

struct Splits {
  std::vector<ExamplePair> train;
  std::vector<ExamplePair> dev;
  std::vector<ExamplePair> test;
};

/// Seeded shuffle then cut by `fractions` (train, dev, test), which must sum to 1.
/// A split with a positive fraction that rounds to zero examples is an error.
Splits split(std::span<const ExamplePair> examples, std::array<double, 3> fractions, std::uint64_t seed);

/// One record per line: id, T, F, the T*F frame values, transcript tokens and
/// translation tokens, separated by tabs. Values use 17 significant digits so
/// the round trip is exact.
void write_examples(const std::filesystem::path& path, std::span<const ExamplePair> examples,
                    const Vocabulary& source, const Vocabulary& target);
std::vector<ExamplePair> read_examples(const std::filesystem::path& path, const Vocabulary& source,
                                       const Vocabulary& target);
/// JSON echo of the generation parameters and cipher.
void write_manifest(const std::filesystem::path& path, const Dataset& dataset);
GenerationParams read_manifest(const std::filesystem::path& path);

}  // namespace e2est
