// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "e2est/config_file.hpp"
#include "e2est/data.hpp"
#include "e2est/metrics.hpp"
#include "e2est/model.hpp"
#include "e2est/trainer.hpp"
#include "e2est/transplant.hpp"

namespace e2est {

struct DataConfig {
  GenerationParams gen;
  std::size_t n_train = 500;
  std::size_t n_dev = 50;
  std::size_t n_test = 50;
  std::uint64_t split_seed = 1;
};

struct TransplantConfig {
  std::vector<GraftKind> grafts;
  bool adapter = false;
  std::filesystem::path asr_checkpoint;  // file or run directory
  std::filesystem::path mt_checkpoint;
  std::vector<std::string> exclude;
};

struct ExperimentConfig {
  Topology topology = Topology::kDirect;
  ModelConfig model;
  DataConfig data;
  TrainOptions train;
  /// Encoder depth at the first epoch; 0 means the full depth.
  std::size_t initial_encoder_layers = 0;
  /// Beam for the final dev/test evaluation of the best checkpoint.
  std::size_t final_beam = 12;
  TransplantConfig transplant;
  std::vector<std::uint64_t> seeds{1};
  std::filesystem::path out = "runs/default";

  /// Row name for comparison tables: topology, CTC flag, transplant scheme, adapter.
  std::string label() const;
};

/// Every key a configuration file may set.
std::vector<std::string> experiment_keys();
KeyValues to_key_values(const ExperimentConfig& cfg);
/// Throws ConfigError on unknown keys or invalid values.
ExperimentConfig from_key_values(const KeyValues& kv);

struct PreparedData {
  Dataset dataset;
  Splits splits;
};

/// Generates the dataset and fixes the model's vocabulary and feature sizes to it.
PreparedData prepare_data(const DataConfig& cfg);
void fit_model_to_data(ModelConfig& model, const Dataset& dataset);

/// Loads a checkpoint from a file or from a run directory's best marker.
Checkpoint load_checkpoint_or_run(const std::filesystem::path& path);

struct InitializedModel {
  ModelGraph graph;
  ParamStore store;
  std::optional<TransplantReport> report;
};

/// Builds the model for `seed`, inserts the adapter and applies the transplant scheme.
InitializedModel initialize_model(const ExperimentConfig& cfg, const Dataset& dataset, std::uint64_t seed);

struct RunSummary {
  std::string label;
  std::string topology;
  bool ctc = false;
  std::string scheme;
  bool adapter = false;
  std::uint64_t seed = 0;
  std::uint64_t best_step = 0;
  std::optional<std::size_t> epochs_to_threshold;
  std::size_t epochs_run = 0;
  double dev_accuracy = 0.0;  // best checkpoint, teacher-forced
  MetricReport dev;           // best checkpoint, final beam
  MetricReport test;
  std::string to_json() const;
  static RunSummary from_json(const std::string& text);
};

struct TrainOutcome {
  TrainResult result;
  RunSummary summary;
};

/// Full training run for one seed. Writes config.txt, metrics.jsonl, run.json
/// and checkpoints under `out` when it is not empty.
TrainOutcome cmd_train(const ExperimentConfig& cfg, std::uint64_t seed, const std::filesystem::path& out,
                       const RowSink& progress = {});

struct EvalRequest {
  std::filesystem::path checkpoint;
  std::filesystem::path second_checkpoint;  // MT model for a cascade
  std::string split = "test";
  std::size_t beam = 12;
  bool case_sensitive = true;
  std::filesystem::path out;
};

/// Decodes a split and scores it; writes hyps.txt and metrics.json into `out`.
MetricReport cmd_eval(const EvalRequest& req);
/// Scores line-aligned hypothesis and reference files.
MetricReport score_files(const std::filesystem::path& hyp, const std::filesystem::path& ref, bool case_sensitive,
                         bool with_wer);

struct CompareRow {
  std::string label;
  std::size_t runs = 0;
  double dev_bleu = 0.0;
  double dev_ter = 0.0;
  double test_bleu = 0.0;
  double test_ter = 0.0;
  std::optional<double> epochs_to_threshold;
};

/// Median of each column across the runs sharing a label. Writes
/// compare.json and compare.txt into `out` when it is not empty.
std::vector<CompareRow> cmd_compare(const std::vector<std::filesystem::path>& run_dirs,
                                    const std::filesystem::path& out);
std::string format_compare_table(const std::vector<CompareRow>& rows);

void cmd_generate_data(const DataConfig& cfg, const std::filesystem::path& out);

/// Initializes the configured model with its transplant scheme and writes ckpt-0
/// and transplant.json into `out`.
TransplantReport cmd_transplant(const ExperimentConfig& cfg, std::uint64_t seed, const std::filesystem::path& out);

double median(std::vector<double> values);

}  // namespace e2est
