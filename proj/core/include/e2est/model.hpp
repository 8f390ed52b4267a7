// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "e2est/autodiff.hpp"
#include "e2est/config_file.hpp"
#include "e2est/data.hpp"
#include "e2est/layers.hpp"
#include "e2est/param_store.hpp"

namespace e2est {

enum class Topology { kDirect, kAsr, kMt, kOne2Many, kMany2One, kTiedCascade, kTiedTriangle };

std::string_view topology_name(Topology t);
/// Throws ConfigError for unknown names.
Topology parse_topology(std::string_view name);
bool has_speech_encoder(Topology t);
bool has_text_encoder(Topology t);
bool is_tied(Topology t);

enum class AdapterPosition { kNone, kEncoderTop, kAsrDecoderTop };
std::string_view adapter_position_name(AdapterPosition p);
AdapterPosition parse_adapter_position(std::string_view name);

struct ModelConfig {
  std::size_t encoder_layers = 3;  // full speech-encoder depth
  std::size_t text_encoder_layers = 2;
  std::size_t decoder_layers = 1;
  std::size_t embed_dim = 32;
  std::size_t encoder_hidden = 64;  // per direction
  std::size_t decoder_hidden = 64;
  std::size_t attention_dim = 64;
  std::size_t feature_dim = 12;
  std::size_t source_vocab = 16;  // full vocabulary sizes, reserved ids and blank included
  std::size_t target_vocab = 16;
  std::size_t pools = 3;          // total 2-pools across the speech encoder
  double lambda = 0.5;
  bool ctc = false;
  double dropout = 0.1;
  double label_smoothing = 0.1;

  /// Throws ConfigError on out-of-range fields.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

void write_model_config(KeyValues& kv, const ModelConfig& cfg);
ModelConfig read_model_config(const KeyValues& kv, ModelConfig defaults = {});
std::vector<std::string> model_config_keys();

/// A wired architecture: which components exist, how deep the speech encoder
/// currently is, and where the adapter sits.
struct ModelGraph {
  Topology topology = Topology::kDirect;
  ModelConfig config;
  std::size_t active_encoder_layers = 0;
  AdapterPosition adapter = AdapterPosition::kNone;

  /// Component prefixes present in this graph.
  std::vector<std::string> prefixes() const;
  /// 2-pools applied after each active encoder layer.
  std::vector<std::size_t> pool_schedule() const;
  bool has_ctc() const { return config.ctc && has_speech_encoder(topology); }
  bool operator==(const ModelGraph&) const = default;
};

/// Pools per layer: one after each of the first layers, with any surplus
/// stacked on the top layer of a shallow encoder.
std::vector<std::size_t> pool_schedule(std::size_t layers, std::size_t pools);

/// `initial_encoder_layers` of 0 means the configured depth.
ModelGraph build(const ModelConfig& config, Topology topology, std::size_t initial_encoder_layers = 0);

std::string serialize_graph(const ModelGraph& graph);
ModelGraph deserialize_graph(std::string_view text);

struct ParamSpec {
  std::string name;
  Shape shape;
  InitScheme scheme;
};

std::vector<ParamSpec> param_specs(const ModelGraph& graph);
/// Fresh store; each tensor is drawn from named_rng(seed, name).
ParamStore init_store(const ModelGraph& graph, std::uint64_t seed);
/// Adds freshly initialized entries for specs missing from `store`; returns their names.
std::vector<std::string> complete_store(const ModelGraph& graph, ParamStore& store);
/// Throws ShapeError unless `store` holds exactly the graph's parameters.
void check_store(const ModelGraph& graph, const ParamStore& store);

/// Deepens the speech encoder; existing tensors are untouched, new layers are fresh.
ModelGraph grow_encoder(const ModelGraph& graph, ParamStore& store, std::size_t new_layer_count);
/// One fresh BLSTM under "adapter." at `position`; throws ConfigError if the
/// position does not suit the topology.
ModelGraph insert_adapter(const ModelGraph& graph, ParamStore& store, AdapterPosition position);
AdapterPosition default_adapter_position(Topology t);

/// Inverted dropout with its own engine per component.
class Dropout {
 public:
  Dropout(double rate, bool training, std::uint64_t seed, std::string_view component);
  Var operator()(Graph& g, Var x);

 private:
  double rate_;
  bool training_;
  std::mt19937_64 rng_;
};

// ---- encoders ----

struct SpeechEncoding {
  layers::SeqBatch below_adapter;  // CTC head input
  layers::SeqBatch top;            // attention memory
};

SpeechEncoding encode_speech(Graph& g, const ModelGraph& graph, const ParamStore& store, const Tensor& frames,
                             std::size_t batch, std::span<const std::size_t> lengths, Dropout* drop);
layers::SeqBatch encode_text(Graph& g, const ModelGraph& graph, const ParamStore& store,
                             const std::vector<TokenIds>& tokens, Dropout* drop);
/// Summed CTC loss of the transcripts under the CTC head.
Var ctc_term(Graph& g, const ParamStore& store, const layers::SeqBatch& enc, const std::vector<TokenIds>& transcripts);

// ---- decoders ----

struct DecoderSpec {
  std::string prefix;
  std::size_t vocab = 0;           // output ids (blank excluded)
  std::size_t enc_memory_dim = 0;  // 0: no attention over the encoder
  std::size_t dec_memory_dim = 0;  // 0: no attention over first-decoder states
  std::size_t context_dim() const { return enc_memory_dim + dec_memory_dim; }
};

enum class DecoderRole { kSt, kAsr };
DecoderSpec decoder_spec(const ModelGraph& graph, DecoderRole role);

struct BoundDecoder {
  DecoderSpec spec;
  Var embed;
  std::optional<layers::AttentionParams> att;
  std::optional<layers::AttentionParams> att_dec;
  std::vector<layers::LstmParams> lstm;
  Var out_w, out_b;
};

BoundDecoder bind_decoder(Graph& g, const ParamStore& store, const DecoderSpec& spec);

struct DecoderMemory {
  std::optional<layers::Memory> enc;
  std::optional<layers::Memory> dec;
  std::size_t batch = 0;
};

DecoderMemory attach_memory(Graph& g, const BoundDecoder& d, const layers::SeqBatch* enc, const layers::SeqBatch* dec);
/// Copies a single-element memory `copies` times along the batch.
DecoderMemory replicate(Graph& g, const DecoderMemory& mem, std::size_t copies);

/// s_{i-1} per layer plus the embedding of e_{i-1} and attention feedback.
struct DecoderState {
  std::vector<layers::LstmState> layers;
  Var prev_embed;
  Var fb_enc, fb_dec;
  std::size_t batch = 0;
  Var top() const { return layers.back().h; }
};

DecoderState initial_state(Graph& g, const BoundDecoder& d, const DecoderMemory& mem, Dropout* drop);

struct Prediction {
  Var logprobs;  // batch x vocab
  Var context;
  Var alpha_enc, alpha_dec;
  Var fb_enc, fb_dec;
};

/// p(e_i | e_{i-1}, s_{i-1}, c_i) with c_i from attention on s_{i-1}.
Prediction predict(Graph& g, const BoundDecoder& d, const DecoderMemory& mem, const DecoderState& state,
                   Dropout* drop);
/// s_i = LSTM([emb(e_i); c_i], s_{i-1}).
DecoderState advance(Graph& g, const BoundDecoder& d, const DecoderState& state, const Prediction& pred,
                     std::span<const std::size_t> tokens, Dropout* drop);
/// Re-indexes the batch rows of a state (beam reordering).
DecoderState reorder(Graph& g, const DecoderState& state, std::span<const std::size_t> index);

struct TokenStats {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
  TokenStats& operator+=(const TokenStats& o) {
    correct += o.correct;
    total += o.total;
    return *this;
  }
};

struct TeacherForced {
  Var loss;  // summed label-smoothed cross entropy
  TokenStats tokens;
};

/// Runs the decoder on targets followed by end-of-sentence.
TeacherForced teacher_forced(Graph& g, const BoundDecoder& d, const DecoderMemory& mem,
                             const std::vector<TokenIds>& targets, double smoothing, Dropout* drop);

struct GreedyRun {
  std::vector<TokenIds> tokens;  // end-of-sentence included when emitted
  std::vector<double> log_probs;
  layers::SeqBatch states;       // s_i after each emitted token, when collected
};

/// Batched argmax decoding, lowest id on ties; element b stops at its
/// end-of-sentence or after max_steps[b] tokens.
GreedyRun greedy_run(Graph& g, const BoundDecoder& d, const DecoderMemory& mem,
                     std::span<const std::size_t> max_steps, bool collect_states);

/// Adapter over first-decoder states or encoder output.
layers::SeqBatch apply_adapter(Graph& g, const ParamStore& store, const layers::SeqBatch& xs);

// ---- losses ----

struct LossBreakdown {
  double st = 0.0;
  double asr = 0.0;
  double mt = 0.0;
  double ctc = 0.0;
  double combined = 0.0;
};

enum class Many2OneMode { kSpeech, kText };

struct ForwardOptions {
  bool training = false;
  std::uint64_t dropout_seed = 0;
  Many2OneMode mode = Many2OneMode::kSpeech;
};

struct ForwardResult {
  Var objective;  // combined loss, summed over the batch
  LossBreakdown parts;
  TokenStats tokens;  // teacher-forced accuracy of the primary decoder
};

/// Dispatches on the graph's topology.
ForwardResult forward(Graph& g, const ModelGraph& graph, const ParamStore& store, const Batch& batch,
                      const ForwardOptions& opts = {});
ForwardResult forward_direct(Graph& g, const ModelGraph& graph, const ParamStore& store, const Batch& batch,
                             const ForwardOptions& opts = {});
ForwardResult forward_one2many(Graph& g, const ModelGraph& graph, const ParamStore& store, const Batch& batch,
                               const ForwardOptions& opts = {});
ForwardResult forward_many2one(Graph& g, const ModelGraph& graph, const ParamStore& store, const Batch& batch,
                               const ForwardOptions& opts = {});
ForwardResult forward_tied_cascade(Graph& g, const ModelGraph& graph, const ParamStore& store, const Batch& batch,
                                   const ForwardOptions& opts = {});
ForwardResult forward_tied_triangle(Graph& g, const ModelGraph& graph, const ParamStore& store, const Batch& batch,
                                    const ForwardOptions& opts = {});

/// Intermediate transcript length cap for tied models: ceil(1.5 J).
std::size_t tied_greedy_cap(std::size_t transcript_length);

}  // namespace e2est
