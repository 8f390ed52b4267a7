// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#include "e2est/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "e2est/checkpoint.hpp"
#include "e2est/errors.hpp"
#include "e2est/metrics.hpp"
#include "e2est/ops.hpp"
#include "json.hpp"

namespace e2est {

namespace {

bool primary_is_transcript(const ModelGraph& graph) { return graph.topology == Topology::kAsr; }

const Vocabulary& output_vocab(const ModelGraph& graph, const Vocabulary& source, const Vocabulary& target) {
  return primary_is_transcript(graph) ? source : target;
}

void add_parts(LossBreakdown& acc, const LossBreakdown& p) {
  acc.st += p.st;
  acc.asr += p.asr;
  acc.mt += p.mt;
  acc.ctc += p.ctc;
  acc.combined += p.combined;
}

LossBreakdown divided(LossBreakdown p, std::size_t n) {
  if (n == 0) return {};
  const double k = 1.0 / static_cast<double>(n);
  return {p.st * k, p.asr * k, p.mt * k, p.ctc * k, p.combined * k};
}

bool frozen(const std::string& name, const std::vector<std::string>& patterns) {
  return std::any_of(patterns.begin(), patterns.end(),
                     [&](const std::string& p) { return name.find(p) != std::string::npos; });
}

void clip_gradients(GradMap& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) {
    for (double v : g.storage()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double k = max_norm / norm;
  for (auto& [name, g] : grads) {
    for (double& v : g.storage()) v *= k;
  }
}

std::uint64_t step_seed(std::uint64_t seed, std::uint64_t step) {
  return named_rng(seed, "step." + std::to_string(step))();
}

}  // namespace

std::string EvalRow::to_json() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["epoch"] = epoch;
  j["encoder_layers"] = encoder_layers;
  j["learning_rate"] = learning_rate;
  j["train"] = {{"examples", train_examples}, {"st", train.st},   {"asr", train.asr},
                {"mt", train.mt},             {"ctc", train.ctc}, {"combined", train.combined}};
  nlohmann::ordered_json d;
  d["accuracy"] = dev.tokens.accuracy();
  d["tokens"] = dev.tokens.total;
  d["bleu"] = dev.bleu;
  d["ter"] = dev.ter;
  if (dev.wer) d["wer"] = *dev.wer;
  j["dev"] = d;
  j["best"] = best;
  return j.dump();
}

Transcripts decode_split(const ModelGraph& graph, const ParamStore& store, std::span<const Batch> batches,
                         const Vocabulary& source, const Vocabulary& target, const DecodeOptions& opts) {
  const Vocabulary& vocab = output_vocab(graph, source, target);
  Transcripts out;
  for (const Batch& b : batches) {
    std::vector<Hypothesis> hyps = decode_batch(graph, store, b, opts);
    const auto& refs = primary_is_transcript(graph) ? b.transcripts : b.translations;
    for (std::size_t i = 0; i < b.batch; ++i) {
      out.hyps.push_back(vocab.join(content_tokens(hyps[i], vocab)));
      out.refs.push_back(vocab.join(refs[i]));
      out.raw.push_back(std::move(hyps[i]));
    }
  }
  return out;
}

DevScores evaluate(const ModelGraph& graph, const ParamStore& store, std::span<const Batch> batches,
                   const Vocabulary& source, const Vocabulary& target, std::size_t beam) {
  if (batches.empty()) throw DataError("evaluate: no batches");
  DevScores s;
  for (const Batch& b : batches) {
    Graph g(false);
    ForwardOptions fo;
    fo.mode = Many2OneMode::kSpeech;
    s.tokens += forward(g, graph, store, b, fo).tokens;
  }
  DecodeOptions dopts;
  dopts.beam = beam;
  Transcripts t = decode_split(graph, store, batches, source, target, dopts);
  s.bleu = bleu(t.hyps, t.refs).bleu;
  s.ter = ter(t.hyps, t.refs).percent;
  if (primary_is_transcript(graph)) s.wer = wer(t.hyps, t.refs).percent;
  return s;
}

TrainResult train(const ModelGraph& graph_in, ParamStore store, std::span<const ExamplePair> train_set,
                  std::span<const ExamplePair> dev_set, const Vocabulary& source, const Vocabulary& target,
                  const TrainOptions& opts, const std::filesystem::path& run_dir, const RowSink& sink,
                  const std::string& run_config) {
  if (opts.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (opts.learning_rate <= 0.0) throw ConfigError("train.learning_rate must be positive");
  check_store(graph_in, store);

  BatchOptions bo;
  bo.batch_size = opts.batch_size;
  bo.max_len = opts.max_len;
  bo.pools = graph_in.config.pools;
  bo.check_ctc = has_speech_encoder(graph_in.topology);
  const std::vector<ExamplePair> usable = filter_examples(train_set, bo);
  const std::vector<Batch> dev_batches = make_batches(dev_set, bo);

  TrainResult r;
  r.graph = graph_in;
  r.optimizer.learning_rate = opts.learning_rate;
  LrSchedule sched;
  sched.decay_factor = opts.decay_factor;
  sched.patience = opts.patience;

  std::vector<double> history;
  std::uint64_t step = 0;
  std::uint64_t best_step_on_disk = 0;
  bool have_best = false;
  double best_bleu = -1.0;
  LossBreakdown acc;
  std::size_t acc_examples = 0;

  auto save = [&](std::uint64_t at, const ParamStore& params) {
    Checkpoint ck;
    ck.step = at;
    ck.graph = r.graph;
    ck.run_config = run_config;
    ck.params = params;
    ck.optimizer = r.optimizer;
    ck.dev_history = history;
    save_checkpoint(ck, checkpoint_path(run_dir, at));
  };

  auto record = [&](std::size_t epoch) {
    EvalRow row;
    row.step = step;
    row.epoch = epoch;
    row.encoder_layers = r.graph.active_encoder_layers;
    row.train = divided(acc, acc_examples);
    row.train_examples = acc_examples;
    row.dev = evaluate(r.graph, store, dev_batches, source, target, 1);
    history.push_back(row.dev.bleu);
    if (!have_best || row.dev.bleu > best_bleu) {
      row.best = true;
      best_bleu = row.dev.bleu;
      r.best_params = store;
      r.best_step = step;
    }
    if (!r.epochs_to_threshold && row.dev.tokens.accuracy() >= opts.accuracy_threshold) {
      r.epochs_to_threshold = epoch;
    }
    if (epoch > 0) r.optimizer.learning_rate = plateau_update(sched, row.dev.bleu, r.optimizer.learning_rate);
    else sched.best_score = row.dev.bleu;
    row.learning_rate = r.optimizer.learning_rate;
    if (!run_dir.empty() && row.best) {
      save(step, store);
      write_best_marker(run_dir, step);
      if (have_best && !opts.keep_all_checkpoints && best_step_on_disk != step) {
        std::filesystem::remove(checkpoint_path(run_dir, best_step_on_disk));
      }
      best_step_on_disk = step;
    } else if (!run_dir.empty() && opts.keep_all_checkpoints) {
      save(step, store);
    }
    have_best = true;
    acc = {};
    acc_examples = 0;
    r.rows.push_back(row);
    if (sink) sink(row);
  };

  auto run_step = [&](const Batch& b, Many2OneMode mode) {
    Graph g;
    ForwardOptions fo;
    fo.training = true;
    fo.dropout_seed = step_seed(opts.seed, step);
    fo.mode = mode;
    ForwardResult fr = forward(g, r.graph, store, b, fo);
    if (!std::isfinite(fr.parts.combined)) {
      throw DivergenceError("training loss is not finite at step " + std::to_string(step + 1) +
                            " (st " + std::to_string(fr.parts.st) + ", asr " + std::to_string(fr.parts.asr) +
                            ", mt " + std::to_string(fr.parts.mt) + ", ctc " + std::to_string(fr.parts.ctc) + ")");
    }
    Var loss = ops::scale(g, fr.objective, 1.0 / static_cast<double>(b.batch));
    GradMap grads = g.backward(loss, store);
    for (auto& [name, grad] : grads) {
      if (frozen(name, opts.freeze)) grad.fill(0.0);
    }
    if (opts.clip_norm > 0.0) clip_gradients(grads, opts.clip_norm);
    adam_step(store, grads, r.optimizer);
    ++step;
    add_parts(acc, fr.parts);
    if (mode == Many2OneMode::kSpeech) acc_examples += b.batch;
  };

  try {
    record(0);
    for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
      if (opts.grow_every > 0 && epoch > 1 && (epoch - 1) % opts.grow_every == 0 &&
          r.graph.active_encoder_layers < r.graph.config.encoder_layers) {
        r.graph = grow_encoder(r.graph, store, r.graph.active_encoder_layers + 1);
      }
      std::vector<const ExamplePair*> order(usable.size());
      for (std::size_t i = 0; i < usable.size(); ++i) order[i] = &usable[i];
      auto rng = named_rng(opts.seed, "shuffle." + std::to_string(epoch));
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
        const std::size_t n = std::min(opts.batch_size, order.size() - start);
        Batch b = collate(std::span<const ExamplePair* const>(order.data() + start, n));
        run_step(b, Many2OneMode::kSpeech);
        if (r.graph.topology == Topology::kMany2One) run_step(b, Many2OneMode::kText);
      }
      record(epoch);
      if (opts.stop_at_threshold && r.epochs_to_threshold) break;
    }
  } catch (const NumericError& e) {
    throw DivergenceError(std::string("training diverged at step ") + std::to_string(step + 1) + ": " + e.what());
  }

  r.params = std::move(store);
  if (!run_dir.empty() && step != best_step_on_disk) save(step, r.params);
  return r;
}

}  // namespace e2est
