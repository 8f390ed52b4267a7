// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "e2est/data.hpp"
#include "e2est/model.hpp"

namespace e2est {

struct Hypothesis {
  TokenIds tokens;        // end-of-sentence included when finished
  double log_prob = 0.0;  // model log-probability in nats
  bool finished = false;
};

/// Source side of one decode: frames for speech topologies, tokens for text ones.
struct DecodeInput {
  Tensor frames;
  TokenIds text;
};

struct DecodeOptions {
  std::size_t beam = 12;
  std::size_t max_len = 0;      // 0: 2 * source length + 5 (pooled frames for speech)
  double length_penalty = 0.6;  // alpha in score / len^alpha
};

/// Which decoder of the graph produces the output.
DecoderRole output_role(const ModelGraph& graph);

Hypothesis greedy_decode(const ModelGraph& graph, const ParamStore& store, const DecodeInput& input,
                         std::size_t max_len = 0);
Hypothesis beam_decode(const ModelGraph& graph, const ParamStore& store, const DecodeInput& input,
                       const DecodeOptions& opts);

/// log p(tokens | input) under the output decoder; `tokens` should end with
/// end-of-sentence to score a finished hypothesis.
double sequence_log_prob(const ModelGraph& graph, const ParamStore& store, const DecodeInput& input,
                         std::span<const std::size_t> tokens);

/// Decodes every element of a batch. Beam 1 runs batched greedy search.
std::vector<Hypothesis> decode_batch(const ModelGraph& graph, const ParamStore& store, const Batch& batch,
                                     const DecodeOptions& opts);

struct CascadeResult {
  Hypothesis transcript;
  Hypothesis translation;
  bool empty_transcript = false;
};

/// ASR beam search, then MT beam search on the recognized content tokens.
CascadeResult cascade(const ModelGraph& asr_graph, const ParamStore& asr_store, const ModelGraph& mt_graph,
                      const ParamStore& mt_store, const Tensor& frames, const DecodeOptions& opts);

/// Content tokens of a hypothesis (reserved ids dropped).
TokenIds content_tokens(const Hypothesis& h, const Vocabulary& vocab);

}  // namespace e2est
