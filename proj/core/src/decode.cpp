// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#include "e2est/decode.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "e2est/errors.hpp"
#include "e2est/ops.hpp"

namespace e2est {

namespace {

struct Prepared {
  BoundDecoder d;
  DecoderMemory mem;
  std::vector<std::size_t> default_max_len;
};

Prepared prepare_speech(Graph& g, const ModelGraph& graph, const ParamStore& store, const Tensor& frames,
                        std::size_t batch, std::span<const std::size_t> lengths) {
  auto enc = encode_speech(g, graph, store, frames, batch, lengths, nullptr);
  Prepared p;
  for (std::size_t len : enc.top.lengths) p.default_max_len.push_back(2 * len + 5);
  if (is_tied(graph.topology)) {
    auto asr_d = bind_decoder(g, store, decoder_spec(graph, DecoderRole::kAsr));
    auto asr_mem = attach_memory(g, asr_d, &enc.top, nullptr);
    GreedyRun first = greedy_run(g, asr_d, asr_mem, p.default_max_len, true);
    layers::SeqBatch dec_seq = first.states;
    if (graph.adapter == AdapterPosition::kAsrDecoderTop) dec_seq = apply_adapter(g, store, dec_seq);
    p.d = bind_decoder(g, store, decoder_spec(graph, DecoderRole::kSt));
    const bool triangle = graph.topology == Topology::kTiedTriangle;
    p.mem = attach_memory(g, p.d, triangle ? &enc.top : nullptr, &dec_seq);
    return p;
  }
  p.d = bind_decoder(g, store, decoder_spec(graph, output_role(graph)));
  p.mem = attach_memory(g, p.d, &enc.top, nullptr);
  return p;
}

Prepared prepare_text(Graph& g, const ModelGraph& graph, const ParamStore& store, const std::vector<TokenIds>& text) {
  auto enc = encode_text(g, graph, store, text, nullptr);
  Prepared p;
  for (const auto& t : text) p.default_max_len.push_back(2 * t.size() + 5);
  p.d = bind_decoder(g, store, decoder_spec(graph, DecoderRole::kSt));
  p.mem = attach_memory(g, p.d, &enc, nullptr);
  return p;
}

Prepared prepare_one(Graph& g, const ModelGraph& graph, const ParamStore& store, const DecodeInput& in) {
  if (has_speech_encoder(graph.topology) && !in.frames.empty()) {
    const std::size_t T = in.frames.rows();
    return prepare_speech(g, graph, store, in.frames, 1, std::vector<std::size_t>{T});
  }
  if (has_text_encoder(graph.topology) && !in.text.empty()) return prepare_text(g, graph, store, {in.text});
  throw DataError("decode input does not match the topology " + std::string(topology_name(graph.topology)));
}

std::size_t row_argmax(const Tensor& t, std::size_t row) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < t.cols(); ++k) {
    if (t(row, k) > t(row, best)) best = k;
  }
  return best;
}

double normalized(const Hypothesis& h, double alpha) {
  if (alpha == 0.0 || h.tokens.empty()) return h.log_prob;
  return h.log_prob / std::pow(static_cast<double>(h.tokens.size()), alpha);
}

const Hypothesis& best_of(const std::vector<Hypothesis>& hyps, double alpha) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < hyps.size(); ++i) {
    if (normalized(hyps[i], alpha) > normalized(hyps[best], alpha)) best = i;
  }
  return hyps[best];
}

Prediction reorder_prediction(Graph& g, const Prediction& p, std::size_t batch, std::span<const std::size_t> index) {
  auto sel = [&](Var v) { return v.valid() ? ops::select_batch(g, v, 1, batch, index) : v; };
  Prediction out;
  out.context = sel(p.context);
  out.fb_enc = sel(p.fb_enc);
  out.fb_dec = sel(p.fb_dec);
  return out;
}

}  // namespace

DecoderRole output_role(const ModelGraph& graph) {
  return graph.topology == Topology::kAsr ? DecoderRole::kAsr : DecoderRole::kSt;
}

Hypothesis greedy_decode(const ModelGraph& graph, const ParamStore& store, const DecodeInput& input,
                         std::size_t max_len) {
  Graph g(false);
  Prepared p = prepare_one(g, graph, store, input);
  if (max_len == 0) max_len = p.default_max_len[0];
  Hypothesis h;
  DecoderState state = initial_state(g, p.d, p.mem, nullptr);
  for (std::size_t s = 0; s < max_len; ++s) {
    Prediction pred = predict(g, p.d, p.mem, state, nullptr);
    const Tensor& lp = g.value(pred.logprobs);
    const std::size_t tok = row_argmax(lp, 0);
    h.tokens.push_back(tok);
    h.log_prob += lp(0, tok);
    if (tok == Vocabulary::kEos) {
      h.finished = true;
      break;
    }
    if (s + 1 < max_len) state = advance(g, p.d, state, pred, std::vector<std::size_t>{tok}, nullptr);
  }
  return h;
}

Hypothesis beam_decode(const ModelGraph& graph, const ParamStore& store, const DecodeInput& input,
                       const DecodeOptions& opts) {
  if (opts.beam == 0) throw ConfigError("beam size must be >= 1");
  Graph g(false);
  Prepared p = prepare_one(g, graph, store, input);
  const std::size_t max_len = opts.max_len ? opts.max_len : p.default_max_len[0];
  const std::size_t K = opts.beam;

  std::map<std::size_t, DecoderMemory> memories;
  memories[1] = p.mem;
  auto memory_for = [&](std::size_t n) -> const DecoderMemory& {
    auto it = memories.find(n);
    if (it == memories.end()) it = memories.emplace(n, replicate(g, p.mem, n)).first;
    return it->second;
  };

  struct Candidate {
    double score;
    std::size_t token, parent;
  };
  std::vector<Hypothesis> alive(1), finished;
  DecoderState state = initial_state(g, p.d, p.mem, nullptr);
  for (std::size_t step = 0; step < max_len; ++step) {
    const std::size_t n = alive.size();
    const DecoderMemory& mem = memory_for(n);
    Prediction pred = predict(g, p.d, mem, state, nullptr);
    const Tensor& lp = g.value(pred.logprobs);
    std::vector<Candidate> cands;
    cands.reserve(n * lp.cols());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t v = 0; v < lp.cols(); ++v) cands.push_back({alive[i].log_prob + lp(i, v), v, i});
    }
    const std::size_t take = std::min(K, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(take), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.token != b.token) return a.token < b.token;
                        return a.parent < b.parent;
                      });
    std::vector<Hypothesis> next;
    std::vector<std::size_t> parents, tokens;
    for (std::size_t c = 0; c < take; ++c) {
      Hypothesis h = alive[cands[c].parent];
      h.tokens.push_back(cands[c].token);
      h.log_prob = cands[c].score;
      if (cands[c].token == Vocabulary::kEos) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
        parents.push_back(cands[c].parent);
        tokens.push_back(cands[c].token);
      }
    }
    alive = std::move(next);
    if (finished.size() >= K || alive.empty() || step + 1 == max_len) break;
    DecoderState picked = reorder(g, state, parents);
    Prediction picked_pred = reorder_prediction(g, pred, n, parents);
    state = advance(g, p.d, picked, picked_pred, tokens, nullptr);
  }
  if (!finished.empty()) return best_of(finished, opts.length_penalty);
  return best_of(alive, opts.length_penalty);
}

double sequence_log_prob(const ModelGraph& graph, const ParamStore& store, const DecodeInput& input,
                         std::span<const std::size_t> tokens) {
  Graph g(false);
  Prepared p = prepare_one(g, graph, store, input);
  DecoderState state = initial_state(g, p.d, p.mem, nullptr);
  double total = 0.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    Prediction pred = predict(g, p.d, p.mem, state, nullptr);
    const Tensor& lp = g.value(pred.logprobs);
    if (tokens[i] >= lp.cols()) throw DataError("sequence_log_prob: token outside the output vocabulary");
    total += lp(0, tokens[i]);
    if (i + 1 < tokens.size()) state = advance(g, p.d, state, pred, std::vector<std::size_t>{tokens[i]}, nullptr);
  }
  return total;
}

std::vector<Hypothesis> decode_batch(const ModelGraph& graph, const ParamStore& store, const Batch& batch,
                                     const DecodeOptions& opts) {
  const bool speech = has_speech_encoder(graph.topology);
  if (opts.beam == 1) {
    Graph g(false);
    Prepared p = speech ? prepare_speech(g, graph, store, batch.frames, batch.batch, batch.frame_lengths)
                        : prepare_text(g, graph, store, batch.transcripts);
    std::vector<std::size_t> limits = p.default_max_len;
    if (opts.max_len) limits.assign(batch.batch, opts.max_len);
    GreedyRun run = greedy_run(g, p.d, p.mem, limits, false);
    std::vector<Hypothesis> out(batch.batch);
    for (std::size_t b = 0; b < batch.batch; ++b) {
      out[b].tokens = run.tokens[b];
      out[b].log_prob = run.log_probs[b];
      out[b].finished = !run.tokens[b].empty() && run.tokens[b].back() == Vocabulary::kEos;
    }
    return out;
  }
  std::vector<Hypothesis> out;
  for (std::size_t b = 0; b < batch.batch; ++b) {
    DecodeInput in;
    if (speech) {
      const std::size_t T = batch.frame_lengths[b], F = batch.feature_dim;
      in.frames = Tensor::matrix(T, F);
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t f = 0; f < F; ++f) in.frames(t, f) = batch.frames(t * batch.batch + b, f);
      }
    } else {
      in.text = batch.transcripts[b];
    }
    out.push_back(beam_decode(graph, store, in, opts));
  }
  return out;
}

TokenIds content_tokens(const Hypothesis& h, const Vocabulary& vocab) {
  TokenIds out;
  for (std::size_t t : h.tokens) {
    if (vocab.is_content(t)) out.push_back(t);
  }
  return out;
}

CascadeResult cascade(const ModelGraph& asr_graph, const ParamStore& asr_store, const ModelGraph& mt_graph,
                      const ParamStore& mt_store, const Tensor& frames, const DecodeOptions& opts) {
  if (asr_graph.topology != Topology::kAsr) throw ConfigError("cascade needs an asr model first");
  if (mt_graph.topology != Topology::kMt) throw ConfigError("cascade needs an mt model second");
  if (asr_graph.config.source_vocab != mt_graph.config.source_vocab) {
    throw ConfigError("cascade: ASR and MT source vocabularies differ");
  }
  CascadeResult r;
  DecodeInput speech;
  speech.frames = frames;
  r.transcript = beam_decode(asr_graph, asr_store, speech, opts);
  DecodeInput text;
  const std::size_t blank = asr_graph.config.source_vocab - 1;
  for (std::size_t t : r.transcript.tokens) {
    if (t >= Vocabulary::kFirstContent && t < blank) text.text.push_back(t);
  }
  if (text.text.empty()) {
    r.empty_transcript = true;
    return r;
  }
  DecodeOptions mt_opts = opts;
  mt_opts.max_len = 0;
  r.translation = beam_decode(mt_graph, mt_store, text, mt_opts);
  return r;
}

}  // namespace e2est
