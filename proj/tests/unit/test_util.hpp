// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "e2est/data.hpp"
#include "e2est/model.hpp"
#include "e2est/tensor.hpp"

namespace e2est::testing {

inline Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Tensor t = Tensor::matrix(rows, cols);
  for (double& v : t.storage()) v = u(rng);
  return t;
}

/// Small model sized for finite-difference checks.
inline ModelConfig tiny_config() {
  ModelConfig c;
  c.encoder_layers = 2;
  c.text_encoder_layers = 1;
  c.decoder_layers = 1;
  c.embed_dim = 3;
  c.encoder_hidden = 3;
  c.decoder_hidden = 4;
  c.attention_dim = 3;
  c.feature_dim = 4;
  c.source_vocab = 8;  // 4 content tokens
  c.target_vocab = 8;
  c.pools = 1;
  c.dropout = 0.0;
  c.label_smoothing = 0.1;
  return c;
}

inline GenerationParams tiny_generation(std::uint64_t seed = 3) {
  GenerationParams p;
  p.seed = seed;
  p.n_examples = 6;
  p.vocab_size = 4;
  p.min_len = 1;
  p.max_len = 3;
  p.min_frames_per_token = 2;
  p.max_frames_per_token = 3;
  return p;
}

inline Batch tiny_batch(const Dataset& ds, std::size_t first, std::size_t n, std::size_t extra_padding = 0) {
  std::vector<const ExamplePair*> items;
  for (std::size_t i = 0; i < n; ++i) items.push_back(&ds.examples[first + i]);
  return collate(items, extra_padding);
}

}  // namespace e2est::testing
