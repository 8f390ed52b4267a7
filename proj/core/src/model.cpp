// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#include "e2est/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "e2est/ctc.hpp"
#include "e2est/errors.hpp"
#include "e2est/ops.hpp"

namespace e2est {

namespace {

struct TopologyInfo {
  Topology t;
  std::string_view name;
};

constexpr TopologyInfo kTopologies[] = {
    {Topology::kDirect, "direct"},           {Topology::kAsr, "asr"},
    {Topology::kMt, "mt"},                   {Topology::kOne2Many, "one2many"},
    {Topology::kMany2One, "many2one"},       {Topology::kTiedCascade, "tied_cascade"},
    {Topology::kTiedTriangle, "tied_triangle"},
};

bool has_asr_decoder(Topology t) { return t == Topology::kAsr || t == Topology::kOne2Many || is_tied(t); }
bool has_st_decoder(Topology t) { return t != Topology::kAsr; }

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

std::string_view topology_name(Topology t) {
  for (const auto& info : kTopologies) {
    if (info.t == t) return info.name;
  }
  return "unknown";
}

Topology parse_topology(std::string_view name) {
  for (const auto& info : kTopologies) {
    if (info.name == name) return info.t;
  }
  throw ConfigError("unknown topology '" + std::string(name) + "'");
}

bool has_speech_encoder(Topology t) { return t != Topology::kMt; }
bool has_text_encoder(Topology t) { return t == Topology::kMt || t == Topology::kMany2One; }
bool is_tied(Topology t) { return t == Topology::kTiedCascade || t == Topology::kTiedTriangle; }

std::string_view adapter_position_name(AdapterPosition p) {
  switch (p) {
    case AdapterPosition::kNone: return "none";
    case AdapterPosition::kEncoderTop: return "encoder_top";
    case AdapterPosition::kAsrDecoderTop: return "asr_decoder_top";
  }
  return "none";
}

AdapterPosition parse_adapter_position(std::string_view name) {
  if (name == "none") return AdapterPosition::kNone;
  if (name == "encoder_top") return AdapterPosition::kEncoderTop;
  if (name == "asr_decoder_top") return AdapterPosition::kAsrDecoderTop;
  throw ConfigError("unknown adapter position '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  require(encoder_layers >= 1, "model.encoder_layers must be >= 1");
  require(text_encoder_layers >= 1, "model.text_encoder_layers must be >= 1");
  require(decoder_layers >= 1, "model.decoder_layers must be >= 1");
  require(embed_dim >= 1 && encoder_hidden >= 1 && decoder_hidden >= 1 && attention_dim >= 1,
          "model dimensions must be positive");
  require(feature_dim >= 1, "model.feature_dim must be >= 1");
  require(source_vocab >= 5 && target_vocab >= 5, "vocabularies need at least one content token");
  require(pools >= 1, "model.pools must be >= 1");
  require(lambda >= 0.0 && lambda <= 1.0, "model.lambda must lie in [0, 1]");
  require(dropout >= 0.0 && dropout < 1.0, "model.dropout must lie in [0, 1)");
  require(label_smoothing >= 0.0 && label_smoothing < 1.0, "model.label_smoothing must lie in [0, 1)");
}

std::vector<std::string> model_config_keys() {
  return {"model.encoder_layers", "model.text_encoder_layers", "model.decoder_layers", "model.embed_dim",
          "model.encoder_hidden", "model.decoder_hidden",      "model.attention_dim",  "model.feature_dim",
          "model.source_vocab",   "model.target_vocab",        "model.pools",          "model.lambda",
          "model.ctc",            "model.dropout",             "model.label_smoothing"};
}

void write_model_config(KeyValues& kv, const ModelConfig& c) {
  kv.set("model.encoder_layers", std::to_string(c.encoder_layers));
  kv.set("model.text_encoder_layers", std::to_string(c.text_encoder_layers));
  kv.set("model.decoder_layers", std::to_string(c.decoder_layers));
  kv.set("model.embed_dim", std::to_string(c.embed_dim));
  kv.set("model.encoder_hidden", std::to_string(c.encoder_hidden));
  kv.set("model.decoder_hidden", std::to_string(c.decoder_hidden));
  kv.set("model.attention_dim", std::to_string(c.attention_dim));
  kv.set("model.feature_dim", std::to_string(c.feature_dim));
  kv.set("model.source_vocab", std::to_string(c.source_vocab));
  kv.set("model.target_vocab", std::to_string(c.target_vocab));
  kv.set("model.pools", std::to_string(c.pools));
  kv.set("model.lambda", format_double(c.lambda));
  kv.set("model.ctc", c.ctc ? "on" : "off");
  kv.set("model.dropout", format_double(c.dropout));
  kv.set("model.label_smoothing", format_double(c.label_smoothing));
}

ModelConfig read_model_config(const KeyValues& kv, ModelConfig d) {
  ModelConfig c;
  c.encoder_layers = kv.get_uint("model.encoder_layers", d.encoder_layers);
  c.text_encoder_layers = kv.get_uint("model.text_encoder_layers", d.text_encoder_layers);
  c.decoder_layers = kv.get_uint("model.decoder_layers", d.decoder_layers);
  c.embed_dim = kv.get_uint("model.embed_dim", d.embed_dim);
  c.encoder_hidden = kv.get_uint("model.encoder_hidden", d.encoder_hidden);
  c.decoder_hidden = kv.get_uint("model.decoder_hidden", d.decoder_hidden);
  c.attention_dim = kv.get_uint("model.attention_dim", d.attention_dim);
  c.feature_dim = kv.get_uint("model.feature_dim", d.feature_dim);
  c.source_vocab = kv.get_uint("model.source_vocab", d.source_vocab);
  c.target_vocab = kv.get_uint("model.target_vocab", d.target_vocab);
  c.pools = kv.get_uint("model.pools", d.pools);
  c.lambda = kv.get_double("model.lambda", d.lambda);
  c.ctc = kv.get_bool("model.ctc", d.ctc);
  c.dropout = kv.get_double("model.dropout", d.dropout);
  c.label_smoothing = kv.get_double("model.label_smoothing", d.label_smoothing);
  return c;
}

std::vector<std::size_t> pool_schedule(std::size_t layers, std::size_t pools) {
  std::vector<std::size_t> out(layers, 0);
  if (layers == 0) return out;
  for (std::size_t k = 0; k < std::min(layers, pools); ++k) out[k] = 1;
  if (pools > layers) out.back() += pools - layers;
  return out;
}

std::vector<std::string> ModelGraph::prefixes() const {
  std::vector<std::string> out;
  if (has_speech_encoder(topology)) out.push_back("encoder");
  if (has_text_encoder(topology)) out.push_back("text_encoder");
  if (has_ctc()) out.push_back("ctc_head");
  if (adapter != AdapterPosition::kNone) out.push_back("adapter");
  if (has_asr_decoder(topology)) out.push_back("decoder_asr");
  if (has_st_decoder(topology)) out.push_back("decoder_st");
  return out;
}

std::vector<std::size_t> ModelGraph::pool_schedule() const {
  if (!has_speech_encoder(topology)) return {};
  return e2est::pool_schedule(active_encoder_layers, config.pools);
}

ModelGraph build(const ModelConfig& config, Topology topology, std::size_t initial_encoder_layers) {
  config.validate();
  ModelGraph g;
  g.topology = topology;
  g.config = config;
  g.active_encoder_layers = initial_encoder_layers == 0 ? config.encoder_layers : initial_encoder_layers;
  if (g.active_encoder_layers > config.encoder_layers) {
    throw ConfigError("initial encoder depth exceeds model.encoder_layers");
  }
  if (!has_speech_encoder(topology)) g.active_encoder_layers = 0;
  return g;
}

std::string serialize_graph(const ModelGraph& graph) {
  KeyValues kv;
  kv.set("topology", std::string(topology_name(graph.topology)));
  kv.set("graph.active_encoder_layers", std::to_string(graph.active_encoder_layers));
  kv.set("graph.adapter", std::string(adapter_position_name(graph.adapter)));
  write_model_config(kv, graph.config);
  return kv.to_text();
}

ModelGraph deserialize_graph(std::string_view text) {
  const KeyValues kv = KeyValues::parse(text, "graph");
  auto topo = kv.get("topology");
  if (!topo) throw ConfigError("graph description lacks a topology");
  ModelGraph g = build(read_model_config(kv), parse_topology(*topo));
  g.active_encoder_layers = kv.get_uint("graph.active_encoder_layers", g.active_encoder_layers);
  g.adapter = parse_adapter_position(kv.get_string("graph.adapter", "none"));
  return g;
}

// ---- parameters ----

namespace {

class SpecBuilder {
 public:
  void add(std::string name, Shape shape) {
    const bool bias = name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0;
    specs_.push_back({std::move(name), std::move(shape), bias ? InitScheme::kZeros : InitScheme::kUniformFanIn});
  }
  void lstm(const std::string& prefix, std::size_t in, std::size_t hidden) {
    add(prefix + ".w_ih", {in, 4 * hidden});
    add(prefix + ".w_hh", {hidden, 4 * hidden});
    add(prefix + ".b", {1, 4 * hidden});
  }
  void blstm(const std::string& prefix, std::size_t in, std::size_t hidden) {
    lstm(prefix + ".fw", in, hidden);
    lstm(prefix + ".bw", in, hidden);
  }
  void attention(const std::string& prefix, std::size_t query, std::size_t memory, std::size_t dim) {
    add(prefix + ".w_query", {query, dim});
    add(prefix + ".w_key", {memory, dim});
    add(prefix + ".u", {1, dim});
    add(prefix + ".b", {1, dim});
    add(prefix + ".v", {dim, 1});
  }
  void decoder(const ModelConfig& c, const DecoderSpec& s) {
    const std::size_t E = c.embed_dim, D = c.decoder_hidden, ctx = s.context_dim();
    add(s.prefix + ".embed", {s.vocab, E});
    if (s.enc_memory_dim) attention(s.prefix + ".att", D, s.enc_memory_dim, c.attention_dim);
    if (s.dec_memory_dim) attention(s.prefix + ".att_dec", D, s.dec_memory_dim, c.attention_dim);
    for (std::size_t k = 1; k <= c.decoder_layers; ++k) {
      lstm(s.prefix + ".lstm" + std::to_string(k), k == 1 ? E + ctx : D, D);
    }
    add(s.prefix + ".out.w", {E + D + ctx, s.vocab});
    add(s.prefix + ".out.b", {1, s.vocab});
  }
  std::vector<ParamSpec> take() { return std::move(specs_); }

 private:
  std::vector<ParamSpec> specs_;
};

}  // namespace

DecoderSpec decoder_spec(const ModelGraph& graph, DecoderRole role) {
  const auto& c = graph.config;
  const std::size_t enc_dim = 2 * c.encoder_hidden;
  DecoderSpec s;
  if (role == DecoderRole::kAsr) {
    if (!has_asr_decoder(graph.topology)) throw ConfigError("topology has no ASR decoder");
    s.prefix = "decoder_asr";
    s.vocab = c.source_vocab - 1;
    s.enc_memory_dim = enc_dim;
    return s;
  }
  if (!has_st_decoder(graph.topology)) throw ConfigError("topology has no translation decoder");
  s.prefix = "decoder_st";
  s.vocab = c.target_vocab - 1;
  switch (graph.topology) {
    case Topology::kTiedCascade: s.dec_memory_dim = c.decoder_hidden; break;
    case Topology::kTiedTriangle:
      s.enc_memory_dim = enc_dim;
      s.dec_memory_dim = c.decoder_hidden;
      break;
    default: s.enc_memory_dim = enc_dim; break;
  }
  return s;
}

std::vector<ParamSpec> param_specs(const ModelGraph& graph) {
  const auto& c = graph.config;
  SpecBuilder b;
  const std::size_t H = c.encoder_hidden;
  if (has_speech_encoder(graph.topology)) {
    for (std::size_t k = 1; k <= graph.active_encoder_layers; ++k) {
      b.blstm("encoder.blstm" + std::to_string(k), k == 1 ? c.feature_dim : 2 * H, H);
    }
  }
  if (has_text_encoder(graph.topology)) {
    b.add("text_encoder.embed", {c.source_vocab - 1, c.embed_dim});
    for (std::size_t k = 1; k <= c.text_encoder_layers; ++k) {
      b.blstm("text_encoder.blstm" + std::to_string(k), k == 1 ? c.embed_dim : 2 * H, H);
    }
  }
  if (graph.has_ctc()) {
    b.add("ctc_head.w", {2 * H, c.source_vocab});
    b.add("ctc_head.b", {1, c.source_vocab});
  }
  if (graph.adapter == AdapterPosition::kEncoderTop) b.blstm("adapter.blstm1", 2 * H, H);
  if (graph.adapter == AdapterPosition::kAsrDecoderTop) {
    b.blstm("adapter.blstm1", c.decoder_hidden, c.decoder_hidden / 2);
  }
  if (has_asr_decoder(graph.topology)) b.decoder(c, decoder_spec(graph, DecoderRole::kAsr));
  if (has_st_decoder(graph.topology)) b.decoder(c, decoder_spec(graph, DecoderRole::kSt));
  return b.take();
}

ParamStore init_store(const ModelGraph& graph, std::uint64_t seed) {
  ParamStore store(seed);
  complete_store(graph, store);
  return store;
}

std::vector<std::string> complete_store(const ModelGraph& graph, ParamStore& store) {
  std::vector<std::string> added;
  for (const auto& spec : param_specs(graph)) {
    if (store.contains(spec.name)) continue;
    auto rng = named_rng(store.rng_seed(), spec.name);
    store.add(spec.name, seeded_init(spec.shape, spec.scheme, rng));
    added.push_back(spec.name);
  }
  return added;
}

void check_store(const ModelGraph& graph, const ParamStore& store) {
  const auto specs = param_specs(graph);
  for (const auto& s : specs) {
    if (!store.contains(s.name)) throw ShapeError("store lacks parameter " + s.name);
    if (store.at(s.name).shape() != s.shape) {
      throw ShapeError("parameter " + s.name + " has shape " + shape_str(store.at(s.name).shape()) + ", expected " +
                       shape_str(s.shape));
    }
  }
  if (store.size() != specs.size()) throw ShapeError("store holds parameters the graph does not use");
}

ModelGraph grow_encoder(const ModelGraph& graph, ParamStore& store, std::size_t new_layer_count) {
  if (!has_speech_encoder(graph.topology)) throw ConfigError("topology has no speech encoder to grow");
  if (new_layer_count <= graph.active_encoder_layers) {
    throw ConfigError("grow_encoder: requested depth " + std::to_string(new_layer_count) +
                      " does not exceed the current " + std::to_string(graph.active_encoder_layers));
  }
  if (new_layer_count > graph.config.encoder_layers) {
    throw ConfigError("grow_encoder: requested depth exceeds model.encoder_layers");
  }
  ModelGraph out = graph;
  out.active_encoder_layers = new_layer_count;
  complete_store(out, store);
  return out;
}

AdapterPosition default_adapter_position(Topology t) {
  return is_tied(t) ? AdapterPosition::kAsrDecoderTop : AdapterPosition::kEncoderTop;
}

ModelGraph insert_adapter(const ModelGraph& graph, ParamStore& store, AdapterPosition position) {
  if (graph.adapter != AdapterPosition::kNone) throw ConfigError("graph already has an adapter");
  const Topology t = graph.topology;
  const bool ok = (position == AdapterPosition::kEncoderTop &&
                   (t == Topology::kDirect || t == Topology::kOne2Many || t == Topology::kMany2One)) ||
                  (position == AdapterPosition::kAsrDecoderTop && is_tied(t));
  if (!ok) {
    throw ConfigError("adapter position " + std::string(adapter_position_name(position)) + " is invalid for " +
                      std::string(topology_name(t)));
  }
  if (position == AdapterPosition::kAsrDecoderTop && graph.config.decoder_hidden % 2 != 0) {
    throw ConfigError("an adapter over decoder states needs an even model.decoder_hidden");
  }
  ModelGraph out = graph;
  out.adapter = position;
  complete_store(out, store);
  return out;
}

// ---- dropout ----

Dropout::Dropout(double rate, bool training, std::uint64_t seed, std::string_view component)
    : rate_(rate), training_(training), rng_(named_rng(seed, component)) {}

Var Dropout::operator()(Graph& g, Var x) { return layers::dropout(g, x, rate_, training_, rng_); }

namespace {

Var maybe_drop(Graph& g, Dropout* drop, Var x) { return drop ? (*drop)(g, x) : x; }

layers::SeqBatch run_blstm(Graph& g, const ParamStore& store, const std::string& prefix, const layers::SeqBatch& xs) {
  return layers::blstm(g, xs, layers::bind_lstm(g, store, prefix + ".fw"), layers::bind_lstm(g, store, prefix + ".bw"));
}

}  // namespace

// ---- encoders ----

SpeechEncoding encode_speech(Graph& g, const ModelGraph& graph, const ParamStore& store, const Tensor& frames,
                             std::size_t batch, std::span<const std::size_t> lengths, Dropout* drop) {
  if (!has_speech_encoder(graph.topology)) throw ConfigError("topology has no speech encoder");
  if (batch == 0 || lengths.size() != batch || frames.rows() % batch != 0) {
    throw ShapeError("encode_speech: frames/lengths do not match the batch size");
  }
  if (frames.cols() != graph.config.feature_dim) {
    throw ShapeError("encode_speech: feature dimension " + std::to_string(frames.cols()) + ", model expects " +
                     std::to_string(graph.config.feature_dim));
  }
  const std::size_t steps = frames.rows() / batch;
  for (std::size_t len : lengths) {
    if (len == 0 || len > steps) throw DataError("encode_speech: sequence length out of range");
  }
  layers::SeqBatch xs{g.constant(frames), batch, steps, {lengths.begin(), lengths.end()}};
  const auto sched = graph.pool_schedule();
  for (std::size_t k = 0; k < graph.active_encoder_layers; ++k) {
    xs = run_blstm(g, store, "encoder.blstm" + std::to_string(k + 1), xs);
    for (std::size_t p = 0; p < sched[k]; ++p) xs = layers::max_pool_time(g, xs, 2);
    xs.states = maybe_drop(g, drop, xs.states);
  }
  SpeechEncoding out{xs, xs};
  if (graph.adapter == AdapterPosition::kEncoderTop) out.top = apply_adapter(g, store, xs);
  return out;
}

layers::SeqBatch encode_text(Graph& g, const ModelGraph& graph, const ParamStore& store,
                             const std::vector<TokenIds>& tokens, Dropout* drop) {
  if (!has_text_encoder(graph.topology)) throw ConfigError("topology has no text encoder");
  const std::size_t batch = tokens.size();
  if (batch == 0) throw DataError("encode_text: empty batch");
  std::size_t steps = 0;
  std::vector<std::size_t> lengths;
  for (const auto& t : tokens) {
    if (t.empty()) throw DataError("encode_text: empty source sentence");
    steps = std::max(steps, t.size());
    lengths.push_back(t.size());
  }
  std::vector<std::size_t> ids(steps * batch, Vocabulary::kPad);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < tokens[b].size(); ++t) ids[t * batch + b] = tokens[b][t];
  }
  Var emb = layers::embed(g, g.param(store, "text_encoder.embed"), ids);
  layers::SeqBatch xs{maybe_drop(g, drop, emb), batch, steps, lengths};
  for (std::size_t k = 1; k <= graph.config.text_encoder_layers; ++k) {
    xs = run_blstm(g, store, "text_encoder.blstm" + std::to_string(k), xs);
    xs.states = maybe_drop(g, drop, xs.states);
  }
  return xs;
}

layers::SeqBatch apply_adapter(Graph& g, const ParamStore& store, const layers::SeqBatch& xs) {
  return run_blstm(g, store, "adapter.blstm1", xs);
}

Var ctc_term(Graph& g, const ParamStore& store, const layers::SeqBatch& enc, const std::vector<TokenIds>& transcripts) {
  Var logits = ops::add_row(g, ops::matmul(g, enc.states, g.param(store, "ctc_head.w")), g.param(store, "ctc_head.b"));
  Var lp = ops::log_softmax_rows(g, logits);
  return ctc::ctc_loss(g, lp, enc.batch, enc.lengths, transcripts);
}

// ---- decoders ----

BoundDecoder bind_decoder(Graph& g, const ParamStore& store, const DecoderSpec& spec) {
  BoundDecoder d;
  d.spec = spec;
  d.embed = g.param(store, spec.prefix + ".embed");
  if (spec.enc_memory_dim) d.att = layers::bind_attention(g, store, spec.prefix + ".att");
  if (spec.dec_memory_dim) d.att_dec = layers::bind_attention(g, store, spec.prefix + ".att_dec");
  for (std::size_t k = 1; store.contains(spec.prefix + ".lstm" + std::to_string(k) + ".w_ih"); ++k) {
    d.lstm.push_back(layers::bind_lstm(g, store, spec.prefix + ".lstm" + std::to_string(k)));
  }
  if (d.lstm.empty()) throw ShapeError("decoder " + spec.prefix + " has no LSTM layers");
  d.out_w = g.param(store, spec.prefix + ".out.w");
  d.out_b = g.param(store, spec.prefix + ".out.b");
  return d;
}

DecoderMemory attach_memory(Graph& g, const BoundDecoder& d, const layers::SeqBatch* enc, const layers::SeqBatch* dec) {
  DecoderMemory mem;
  if (d.att) {
    if (!enc) throw ShapeError("decoder " + d.spec.prefix + " needs encoder memory");
    mem.enc = layers::make_memory(g, *enc, *d.att);
    mem.batch = enc->batch;
  }
  if (d.att_dec) {
    if (!dec) throw ShapeError("decoder " + d.spec.prefix + " needs first-decoder memory");
    if (mem.batch && mem.batch != dec->batch) throw ShapeError("memories disagree on batch size");
    mem.dec = layers::make_memory(g, *dec, *d.att_dec);
    mem.batch = dec->batch;
  }
  return mem;
}

namespace {

layers::Memory replicate_one(Graph& g, const layers::Memory& m, std::size_t copies) {
  std::vector<std::size_t> index(copies, 0);
  layers::Memory out;
  out.seq.batch = copies;
  out.seq.steps = m.seq.steps;
  out.seq.lengths.assign(copies, m.seq.lengths.at(0));
  out.seq.states = ops::select_batch(g, m.seq.states, m.seq.steps, 1, index);
  out.keys = ops::select_batch(g, m.keys, m.seq.steps, 1, index);
  return out;
}

Var zero_feedback_for(Graph& g, const std::optional<layers::Memory>& m) {
  return m ? layers::zero_feedback(g, *m) : Var{};
}

Var reorder_rows(Graph& g, Var v, std::size_t batch, std::span<const std::size_t> index) {
  return v.valid() ? ops::select_batch(g, v, 1, batch, index) : v;
}

}  // namespace

DecoderMemory replicate(Graph& g, const DecoderMemory& mem, std::size_t copies) {
  if (mem.batch != 1) throw ShapeError("replicate expects a single-element memory");
  DecoderMemory out;
  out.batch = copies;
  if (mem.enc) out.enc = replicate_one(g, *mem.enc, copies);
  if (mem.dec) out.dec = replicate_one(g, *mem.dec, copies);
  return out;
}

DecoderState initial_state(Graph& g, const BoundDecoder& d, const DecoderMemory& mem, Dropout* drop) {
  DecoderState s;
  s.batch = mem.batch;
  const std::size_t hidden = g.value(d.lstm[0].w_hh).rows();
  for (std::size_t k = 0; k < d.lstm.size(); ++k) s.layers.push_back(layers::zero_lstm_state(g, s.batch, hidden));
  std::vector<std::size_t> bos(s.batch, Vocabulary::kBos);
  s.prev_embed = maybe_drop(g, drop, layers::embed(g, d.embed, bos));
  s.fb_enc = zero_feedback_for(g, mem.enc);
  s.fb_dec = zero_feedback_for(g, mem.dec);
  return s;
}

Prediction predict(Graph& g, const BoundDecoder& d, const DecoderMemory& mem, const DecoderState& state,
                   Dropout* drop) {
  Prediction p;
  const Var s_prev = state.top();
  std::vector<Var> contexts;
  if (d.att) {
    auto a = layers::additive_attention(g, s_prev, *mem.enc, state.fb_enc, *d.att);
    p.alpha_enc = a.weights;
    p.fb_enc = a.feedback;
    contexts.push_back(a.context);
  }
  if (d.att_dec) {
    auto a = layers::additive_attention(g, s_prev, *mem.dec, state.fb_dec, *d.att_dec);
    p.alpha_dec = a.weights;
    p.fb_dec = a.feedback;
    contexts.push_back(a.context);
  }
  p.context = contexts.size() == 1 ? contexts[0] : ops::concat_cols(g, contexts);
  Var in = maybe_drop(g, drop, ops::concat_cols(g, {state.prev_embed, s_prev, p.context}));
  p.logprobs = ops::log_softmax_rows(g, ops::add_row(g, ops::matmul(g, in, d.out_w), d.out_b));
  return p;
}

DecoderState advance(Graph& g, const BoundDecoder& d, const DecoderState& state, const Prediction& pred,
                     std::span<const std::size_t> tokens, Dropout* drop) {
  if (tokens.size() != state.batch) throw ShapeError("advance: token count does not match the batch");
  DecoderState next;
  next.batch = state.batch;
  next.prev_embed = maybe_drop(g, drop, layers::embed(g, d.embed, tokens));
  next.fb_enc = pred.fb_enc;
  next.fb_dec = pred.fb_dec;
  Var x = ops::concat_cols(g, {next.prev_embed, pred.context});
  for (std::size_t k = 0; k < d.lstm.size(); ++k) {
    next.layers.push_back(layers::lstm_step(g, x, state.layers[k], d.lstm[k]));
    x = next.layers.back().h;
  }
  return next;
}

DecoderState reorder(Graph& g, const DecoderState& state, std::span<const std::size_t> index) {
  DecoderState out;
  out.batch = index.size();
  for (const auto& l : state.layers) {
    out.layers.push_back({reorder_rows(g, l.h, state.batch, index), reorder_rows(g, l.c, state.batch, index)});
  }
  out.prev_embed = reorder_rows(g, state.prev_embed, state.batch, index);
  out.fb_enc = reorder_rows(g, state.fb_enc, state.batch, index);
  out.fb_dec = reorder_rows(g, state.fb_dec, state.batch, index);
  return out;
}

namespace {

std::size_t row_argmax(const Tensor& t, std::size_t row) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < t.cols(); ++k) {
    if (t(row, k) > t(row, best)) best = k;
  }
  return best;
}

}  // namespace

TeacherForced teacher_forced(Graph& g, const BoundDecoder& d, const DecoderMemory& mem,
                             const std::vector<TokenIds>& targets, double smoothing, Dropout* drop) {
  const std::size_t B = mem.batch;
  if (targets.size() != B) throw ShapeError("teacher_forced: target count does not match the batch");
  std::size_t longest = 0;
  for (const auto& t : targets) {
    if (t.empty()) throw DataError("teacher_forced: empty target sequence");
    for (std::size_t id : t) {
      if (id >= d.spec.vocab) throw DataError("teacher_forced: target id outside the output vocabulary");
    }
    longest = std::max(longest, t.size());
  }
  TeacherForced out;
  DecoderState state = initial_state(g, d, mem, drop);
  std::vector<int> tgt(B);
  std::vector<std::size_t> next(B);
  Var total;
  for (std::size_t s = 0; s <= longest; ++s) {
    Prediction p = predict(g, d, mem, state, drop);
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t len = targets[b].size();
      tgt[b] = s < len ? static_cast<int>(targets[b][s]) : s == len ? static_cast<int>(Vocabulary::kEos) : -1;
      next[b] = tgt[b] >= 0 ? static_cast<std::size_t>(tgt[b]) : Vocabulary::kEos;
    }
    Var step_loss = layers::label_smoothed_ce(g, p.logprobs, tgt, smoothing);
    total = total.valid() ? ops::add(g, total, step_loss) : step_loss;
    const Tensor& lp = g.value(p.logprobs);
    for (std::size_t b = 0; b < B; ++b) {
      if (tgt[b] < 0) continue;
      ++out.tokens.total;
      if (row_argmax(lp, b) == static_cast<std::size_t>(tgt[b])) ++out.tokens.correct;
    }
    if (s < longest) state = advance(g, d, state, p, next, drop);
  }
  out.loss = total;
  return out;
}

GreedyRun greedy_run(Graph& g, const BoundDecoder& d, const DecoderMemory& mem,
                     std::span<const std::size_t> max_steps, bool collect_states) {
  const std::size_t B = mem.batch;
  if (max_steps.size() != B) throw ShapeError("greedy_run: max_steps does not match the batch");
  GreedyRun run;
  run.tokens.resize(B);
  run.log_probs.assign(B, 0.0);
  std::vector<bool> done(B, false);
  std::vector<std::size_t> chosen(B);
  std::vector<Var> states;
  DecoderState state = initial_state(g, d, mem, nullptr);
  const std::size_t limit = *std::max_element(max_steps.begin(), max_steps.end());
  for (std::size_t s = 0; s < limit; ++s) {
    bool any = false;
    for (std::size_t b = 0; b < B; ++b) {
      if (!done[b] && s >= max_steps[b]) done[b] = true;
      any = any || !done[b];
    }
    if (!any) break;
    Prediction p = predict(g, d, mem, state, nullptr);
    const Tensor& lp = g.value(p.logprobs);
    for (std::size_t b = 0; b < B; ++b) {
      if (done[b]) {
        chosen[b] = Vocabulary::kEos;
        continue;
      }
      chosen[b] = row_argmax(lp, b);
      run.tokens[b].push_back(chosen[b]);
      run.log_probs[b] += lp(b, chosen[b]);
      if (chosen[b] == Vocabulary::kEos) done[b] = true;
    }
    const bool last = std::all_of(done.begin(), done.end(), [](bool x) { return x; });
    if (collect_states || !last) {
      state = advance(g, d, state, p, chosen, nullptr);
      if (collect_states) states.push_back(state.top());
    }
  }
  if (collect_states) {
    run.states.batch = B;
    run.states.steps = states.size();
    for (const auto& t : run.tokens) run.states.lengths.push_back(t.size());
    run.states.states = ops::concat_rows(g, states);
  }
  return run;
}

std::size_t tied_greedy_cap(std::size_t transcript_length) { return (3 * transcript_length + 1) / 2; }

// ---- losses ----

namespace {

void check_topology(const ModelGraph& graph, std::initializer_list<Topology> allowed, const char* fn) {
  for (Topology t : allowed) {
    if (graph.topology == t) return;
  }
  throw ConfigError(std::string(fn) + " does not apply to topology " + std::string(topology_name(graph.topology)));
}

void check_targets(const std::vector<TokenIds>& seqs, std::size_t batch, const char* what) {
  if (seqs.size() != batch) throw DataError(std::string("batch lacks ") + what);
  for (const auto& s : seqs) {
    if (s.empty()) throw DataError(std::string("empty ") + what + " in batch");
  }
}

double item(const Graph& g, Var v) { return v.valid() ? g.value(v).item() : 0.0; }

struct Droppers {
  Dropout encoder, text_encoder, decoder_st, decoder_asr;
  Droppers(const ModelGraph& graph, const ForwardOptions& o)
      : encoder(graph.config.dropout, o.training, o.dropout_seed, "encoder"),
        text_encoder(graph.config.dropout, o.training, o.dropout_seed, "text_encoder"),
        decoder_st(graph.config.dropout, o.training, o.dropout_seed, "decoder_st"),
        decoder_asr(graph.config.dropout, o.training, o.dropout_seed, "decoder_asr") {}
};

Var weighted_sum(Graph& g, Var a, double wa, Var b, double wb) {
  return ops::add(g, ops::scale(g, a, wa), ops::scale(g, b, wb));
}

ForwardResult finish(Graph& g, Var objective, Var st, Var asr, Var mt, Var ctc_v, TokenStats tokens) {
  ForwardResult r;
  r.objective = objective;
  r.parts.st = item(g, st);
  r.parts.asr = item(g, asr);
  r.parts.mt = item(g, mt);
  r.parts.ctc = item(g, ctc_v);
  r.parts.combined = item(g, objective);
  r.tokens = tokens;
  return r;
}

ForwardResult forward_tied(Graph& g, const ModelGraph& graph, const ParamStore& store, const Batch& batch,
                           const ForwardOptions& opts) {
  check_targets(batch.transcripts, batch.batch, "transcripts");
  check_targets(batch.translations, batch.batch, "translations");
  Droppers dr(graph, opts);
  auto enc = encode_speech(g, graph, store, batch.frames, batch.batch, batch.frame_lengths, &dr.encoder);

  auto asr_d = bind_decoder(g, store, decoder_spec(graph, DecoderRole::kAsr));
  auto asr_mem = attach_memory(g, asr_d, &enc.top, nullptr);
  auto asr_tf = teacher_forced(g, asr_d, asr_mem, batch.transcripts, graph.config.label_smoothing, &dr.decoder_asr);
  Var aux = asr_tf.loss;
  Var ctc_v;
  if (graph.has_ctc()) {
    ctc_v = ctc_term(g, store, enc.below_adapter, batch.transcripts);
    aux = ops::add(g, aux, ctc_v);
  }

  std::vector<std::size_t> caps;
  for (const auto& f : batch.transcripts) caps.push_back(tied_greedy_cap(f.size()));
  GreedyRun first = greedy_run(g, asr_d, asr_mem, caps, true);
  layers::SeqBatch dec_seq = first.states;
  if (graph.adapter == AdapterPosition::kAsrDecoderTop) dec_seq = apply_adapter(g, store, dec_seq);

  auto st_d = bind_decoder(g, store, decoder_spec(graph, DecoderRole::kSt));
  const bool triangle = graph.topology == Topology::kTiedTriangle;
  auto st_mem = attach_memory(g, st_d, triangle ? &enc.top : nullptr, &dec_seq);
  auto st_tf = teacher_forced(g, st_d, st_mem, batch.translations, graph.config.label_smoothing, &dr.decoder_st);
  const double lambda = graph.config.lambda;
  Var obj = weighted_sum(g, st_tf.loss, lambda, aux, 1.0 - lambda);
  return finish(g, obj, st_tf.loss, asr_tf.loss, {}, ctc_v, st_tf.tokens);
}

}  // namespace

ForwardResult forward_direct(Graph& g, const ModelGraph& graph, const ParamStore& store, const Batch& batch,
                             const ForwardOptions& opts) {
  check_topology(graph, {Topology::kDirect}, "forward_direct");
  check_targets(batch.translations, batch.batch, "translations");
  if (graph.has_ctc()) check_targets(batch.transcripts, batch.batch, "transcripts");
  Droppers dr(graph, opts);
  auto enc = encode_speech(g, graph, store, batch.frames, batch.batch, batch.frame_lengths, &dr.encoder);
  auto d = bind_decoder(g, store, decoder_spec(graph, DecoderRole::kSt));
  auto mem = attach_memory(g, d, &enc.top, nullptr);
  auto tf = teacher_forced(g, d, mem, batch.translations, graph.config.label_smoothing, &dr.decoder_st);
  Var obj = tf.loss;
  Var ctc_v;
  if (graph.has_ctc()) {
    ctc_v = ctc_term(g, store, enc.below_adapter, batch.transcripts);
    obj = ops::add(g, obj, ctc_v);
  }
  return finish(g, obj, tf.loss, {}, {}, ctc_v, tf.tokens);
}

ForwardResult forward_one2many(Graph& g, const ModelGraph& graph, const ParamStore& store, const Batch& batch,
                               const ForwardOptions& opts) {
  check_topology(graph, {Topology::kOne2Many}, "forward_one2many");
  check_targets(batch.transcripts, batch.batch, "transcripts");
  check_targets(batch.translations, batch.batch, "translations");
  Droppers dr(graph, opts);
  auto enc = encode_speech(g, graph, store, batch.frames, batch.batch, batch.frame_lengths, &dr.encoder);
  auto st_d = bind_decoder(g, store, decoder_spec(graph, DecoderRole::kSt));
  auto st_mem = attach_memory(g, st_d, &enc.top, nullptr);
  auto st_tf = teacher_forced(g, st_d, st_mem, batch.translations, graph.config.label_smoothing, &dr.decoder_st);
  auto asr_d = bind_decoder(g, store, decoder_spec(graph, DecoderRole::kAsr));
  auto asr_mem = attach_memory(g, asr_d, &enc.top, nullptr);
  auto asr_tf = teacher_forced(g, asr_d, asr_mem, batch.transcripts, graph.config.label_smoothing, &dr.decoder_asr);
  Var aux = asr_tf.loss;
  Var ctc_v;
  if (graph.has_ctc()) {
    ctc_v = ctc_term(g, store, enc.below_adapter, batch.transcripts);
    aux = ops::add(g, aux, ctc_v);
  }
  const double lambda = graph.config.lambda;
  Var obj = weighted_sum(g, st_tf.loss, lambda, aux, 1.0 - lambda);
  return finish(g, obj, st_tf.loss, asr_tf.loss, {}, ctc_v, st_tf.tokens);
}

ForwardResult forward_many2one(Graph& g, const ModelGraph& graph, const ParamStore& store, const Batch& batch,
                               const ForwardOptions& opts) {
  check_topology(graph, {Topology::kMany2One}, "forward_many2one");
  check_targets(batch.translations, batch.batch, "translations");
  Droppers dr(graph, opts);
  const double lambda = graph.config.lambda;
  auto d = bind_decoder(g, store, decoder_spec(graph, DecoderRole::kSt));
  if (opts.mode == Many2OneMode::kText) {
    check_targets(batch.transcripts, batch.batch, "transcripts");
    auto text = encode_text(g, graph, store, batch.transcripts, &dr.text_encoder);
    auto mem = attach_memory(g, d, &text, nullptr);
    auto tf = teacher_forced(g, d, mem, batch.translations, graph.config.label_smoothing, &dr.decoder_st);
    return finish(g, ops::scale(g, tf.loss, 1.0 - lambda), {}, {}, tf.loss, {}, tf.tokens);
  }
  if (batch.frames.empty()) throw DataError("speech mode needs frames");
  if (graph.has_ctc()) check_targets(batch.transcripts, batch.batch, "transcripts");
  auto enc = encode_speech(g, graph, store, batch.frames, batch.batch, batch.frame_lengths, &dr.encoder);
  auto mem = attach_memory(g, d, &enc.top, nullptr);
  auto tf = teacher_forced(g, d, mem, batch.translations, graph.config.label_smoothing, &dr.decoder_st);
  Var speech = tf.loss;
  Var ctc_v;
  if (graph.has_ctc()) {
    ctc_v = ctc_term(g, store, enc.below_adapter, batch.transcripts);
    speech = ops::add(g, speech, ctc_v);
  }
  return finish(g, ops::scale(g, speech, lambda), tf.loss, {}, {}, ctc_v, tf.tokens);
}

ForwardResult forward_tied_cascade(Graph& g, const ModelGraph& graph, const ParamStore& store, const Batch& batch,
                                   const ForwardOptions& opts) {
  check_topology(graph, {Topology::kTiedCascade}, "forward_tied_cascade");
  return forward_tied(g, graph, store, batch, opts);
}

ForwardResult forward_tied_triangle(Graph& g, const ModelGraph& graph, const ParamStore& store, const Batch& batch,
                                    const ForwardOptions& opts) {
  check_topology(graph, {Topology::kTiedTriangle}, "forward_tied_triangle");
  return forward_tied(g, graph, store, batch, opts);
}

ForwardResult forward(Graph& g, const ModelGraph& graph, const ParamStore& store, const Batch& batch,
                      const ForwardOptions& opts) {
  switch (graph.topology) {
    case Topology::kDirect: return forward_direct(g, graph, store, batch, opts);
    case Topology::kOne2Many: return forward_one2many(g, graph, store, batch, opts);
    case Topology::kMany2One: return forward_many2one(g, graph, store, batch, opts);
    case Topology::kTiedCascade: return forward_tied_cascade(g, graph, store, batch, opts);
    case Topology::kTiedTriangle: return forward_tied_triangle(g, graph, store, batch, opts);
    case Topology::kAsr: {
      check_targets(batch.transcripts, batch.batch, "transcripts");
      Droppers dr(graph, opts);
      auto enc = encode_speech(g, graph, store, batch.frames, batch.batch, batch.frame_lengths, &dr.encoder);
      auto d = bind_decoder(g, store, decoder_spec(graph, DecoderRole::kAsr));
      auto mem = attach_memory(g, d, &enc.top, nullptr);
      auto tf = teacher_forced(g, d, mem, batch.transcripts, graph.config.label_smoothing, &dr.decoder_asr);
      Var obj = tf.loss;
      Var ctc_v;
      if (graph.has_ctc()) {
        ctc_v = ctc_term(g, store, enc.below_adapter, batch.transcripts);
        obj = ops::add(g, obj, ctc_v);
      }
      return finish(g, obj, {}, tf.loss, {}, ctc_v, tf.tokens);
    }
    case Topology::kMt: {
      check_targets(batch.transcripts, batch.batch, "transcripts");
      check_targets(batch.translations, batch.batch, "translations");
      Droppers dr(graph, opts);
      auto text = encode_text(g, graph, store, batch.transcripts, &dr.text_encoder);
      auto d = bind_decoder(g, store, decoder_spec(graph, DecoderRole::kSt));
      auto mem = attach_memory(g, d, &text, nullptr);
      auto tf = teacher_forced(g, d, mem, batch.translations, graph.config.label_smoothing, &dr.decoder_st);
      return finish(g, tf.loss, {}, {}, tf.loss, {}, tf.tokens);
    }
  }
  throw ConfigError("unknown topology");
}

}  // namespace e2est
