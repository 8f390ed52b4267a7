// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "e2est/data.hpp"
#include "e2est/decode.hpp"
#include "e2est/model.hpp"
#include "e2est/optim.hpp"

namespace e2est {

struct TrainOptions {
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  std::size_t max_len = 75;
  double learning_rate = 1e-3;
  double decay_factor = 0.9;
  int patience = 6;
  /// Epochs between single-layer encoder growth steps; 0 disables growth.
  std::size_t grow_every = 0;
  double accuracy_threshold = 0.9;
  /// Stop once dev accuracy reaches the threshold.
  bool stop_at_threshold = false;
  /// Global gradient-norm clip; 0 disables it.
  double clip_norm = 0.0;
  std::uint64_t seed = 1;
  /// Parameter names containing any of these substrings are not updated.
  std::vector<std::string> freeze;
  /// Keep every evaluated checkpoint instead of only the best and the last.
  bool keep_all_checkpoints = false;
};

struct DevScores {
  TokenStats tokens;
  double bleu = 0.0;
  double ter = 0.0;
  std::optional<double> wer;
};

struct EvalRow {
  std::uint64_t step = 0;
  std::size_t epoch = 0;
  std::size_t encoder_layers = 0;
  double learning_rate = 0.0;
  LossBreakdown train;  // per-example means since the previous row
  std::size_t train_examples = 0;
  DevScores dev;
  bool best = false;
  std::string to_json() const;
};

struct TrainResult {
  ModelGraph graph;
  ParamStore params;       // final
  ParamStore best_params;  // highest dev BLEU, earliest on ties
  std::uint64_t best_step = 0;
  std::vector<EvalRow> rows;
  std::optional<std::size_t> epochs_to_threshold;
  OptimizerState optimizer;
};

/// Teacher-forced accuracy of the primary decoder plus greedy BLEU/TER.
/// WER is filled in for speech-recognition models.
DevScores evaluate(const ModelGraph& graph, const ParamStore& store, std::span<const Batch> batches,
                   const Vocabulary& source, const Vocabulary& target, std::size_t beam = 1);

/// Hypothesis and reference strings of the primary output for a set of batches.
struct Transcripts {
  std::vector<std::string> hyps;
  std::vector<std::string> refs;
  std::vector<Hypothesis> raw;
};
Transcripts decode_split(const ModelGraph& graph, const ParamStore& store, std::span<const Batch> batches,
                         const Vocabulary& source, const Vocabulary& target, const DecodeOptions& opts);

using RowSink = std::function<void(const EvalRow&)>;

/// Trains `store` for `graph`. Writes checkpoints under `run_dir` when it is
/// not empty; `sink` sees every evaluation row as it is produced.
TrainResult train(const ModelGraph& graph, ParamStore store, std::span<const ExamplePair> train_set,
                  std::span<const ExamplePair> dev_set, const Vocabulary& source, const Vocabulary& target,
                  const TrainOptions& opts, const std::filesystem::path& run_dir = {}, const RowSink& sink = {},
                  const std::string& run_config = {});

}  // namespace e2est
