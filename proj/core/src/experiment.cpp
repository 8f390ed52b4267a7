// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#include "e2est/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "e2est/checkpoint.hpp"
#include "e2est/errors.hpp"
#include "json.hpp"

namespace e2est {

namespace {

using nlohmann::ordered_json;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(text);
  while (std::getline(is, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ",") + s;
  return out;
}

std::string onoff(bool v) { return v ? "on" : "off"; }

ordered_json report_json(const MetricReport& m) { return ordered_json::parse(m.to_json()); }

MetricReport report_from_json(const nlohmann::json& j) {
  MetricReport m;
  m.sentences = j.at("sentences").get<std::size_t>();
  m.bleu.bleu = j.at("bleu").get<double>();
  m.bleu.precisions = j.at("precisions").get<std::array<double, 4>>();
  m.bleu.brevity_penalty = j.at("brevity_penalty").get<double>();
  m.bleu.hyp_length = j.at("hyp_length").get<std::size_t>();
  m.bleu.ref_length = j.at("ref_length").get<std::size_t>();
  m.ter.percent = j.at("ter").get<double>();
  if (j.contains("wer")) m.wer = RatioResult{j.at("wer").get<double>(), 0, 0};
  return m;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_file_atomic(path, text);
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::vector<std::string> out;
  std::istringstream is(read_file(path));
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

const std::vector<ExamplePair>& split_by_name(const Splits& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "dev") return s.dev;
  if (name == "test") return s.test;
  throw ConfigError("unknown split '" + name + "' (expected train, dev or test)");
}

MetricReport score_split(const ModelGraph& graph, const ParamStore& store, std::span<const ExamplePair> examples,
                         const Dataset& ds, std::size_t beam, std::size_t max_len, std::vector<std::string>* hyps_out) {
  BatchOptions bo;
  bo.batch_size = 16;
  bo.max_len = max_len;
  bo.pools = graph.config.pools;
  bo.check_ctc = has_speech_encoder(graph.topology);
  const auto batches = make_batches(examples, bo);
  DecodeOptions dopts;
  dopts.beam = beam;
  Transcripts t = decode_split(graph, store, batches, ds.source, ds.target, dopts);
  if (hyps_out) *hyps_out = t.hyps;
  return score_corpus(t.hyps, t.refs, true, graph.topology == Topology::kAsr);
}

}  // namespace

double median(std::vector<double> values) {
  if (values.empty()) throw DataError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::string ExperimentConfig::label() const {
  std::string s(topology_name(topology));
  if (model.ctc) s += "+ctc";
  if (!transplant.grafts.empty()) s += " {" + scheme_name(transplant.grafts) + "}";
  if (transplant.adapter) s += "+adapter";
  return s;
}

std::vector<std::string> experiment_keys() {
  std::vector<std::string> keys = model_config_keys();
  for (const char* k :
       {"topology", "seed", "seeds", "out", "data.seed", "data.vocab_size", "data.min_len", "data.max_len",
        "data.min_frames_per_token", "data.max_frames_per_token", "data.noise_sigma", "data.n_train", "data.n_dev",
        "data.n_test", "data.split_seed", "train.epochs", "train.batch_size", "train.max_len", "train.learning_rate",
        "train.decay_factor", "train.patience", "train.initial_encoder_layers", "train.grow_every",
        "train.accuracy_threshold", "train.stop_at_threshold", "train.clip_norm", "train.freeze",
        "train.keep_all_checkpoints", "train.final_beam", "transplant.scheme", "transplant.adapter",
        "transplant.asr_checkpoint", "transplant.mt_checkpoint", "transplant.exclude"}) {
    keys.emplace_back(k);
  }
  return keys;
}

KeyValues to_key_values(const ExperimentConfig& c) {
  KeyValues kv;
  kv.set("topology", std::string(topology_name(c.topology)));
  std::vector<std::string> seeds;
  for (auto s : c.seeds) seeds.push_back(std::to_string(s));
  kv.set("seeds", join_list(seeds));
  kv.set("out", c.out.string());
  write_model_config(kv, c.model);
  const auto& g = c.data.gen;
  kv.set("data.seed", std::to_string(g.seed));
  kv.set("data.vocab_size", std::to_string(g.vocab_size));
  kv.set("data.min_len", std::to_string(g.min_len));
  kv.set("data.max_len", std::to_string(g.max_len));
  kv.set("data.min_frames_per_token", std::to_string(g.min_frames_per_token));
  kv.set("data.max_frames_per_token", std::to_string(g.max_frames_per_token));
  kv.set("data.noise_sigma", format_double(g.noise_sigma));
  kv.set("data.n_train", std::to_string(c.data.n_train));
  kv.set("data.n_dev", std::to_string(c.data.n_dev));
  kv.set("data.n_test", std::to_string(c.data.n_test));
  kv.set("data.split_seed", std::to_string(c.data.split_seed));
  const auto& t = c.train;
  kv.set("train.epochs", std::to_string(t.epochs));
  kv.set("train.batch_size", std::to_string(t.batch_size));
  kv.set("train.max_len", std::to_string(t.max_len));
  kv.set("train.learning_rate", format_double(t.learning_rate));
  kv.set("train.decay_factor", format_double(t.decay_factor));
  kv.set("train.patience", std::to_string(t.patience));
  kv.set("train.initial_encoder_layers", std::to_string(c.initial_encoder_layers));
  kv.set("train.grow_every", std::to_string(t.grow_every));
  kv.set("train.accuracy_threshold", format_double(t.accuracy_threshold));
  kv.set("train.stop_at_threshold", onoff(t.stop_at_threshold));
  kv.set("train.clip_norm", format_double(t.clip_norm));
  kv.set("train.freeze", join_list(t.freeze));
  kv.set("train.keep_all_checkpoints", onoff(t.keep_all_checkpoints));
  kv.set("train.final_beam", std::to_string(c.final_beam));
  kv.set("transplant.scheme", scheme_name(c.transplant.grafts));
  kv.set("transplant.adapter", onoff(c.transplant.adapter));
  kv.set("transplant.asr_checkpoint", c.transplant.asr_checkpoint.string());
  kv.set("transplant.mt_checkpoint", c.transplant.mt_checkpoint.string());
  kv.set("transplant.exclude", join_list(c.transplant.exclude));
  return kv;
}

ExperimentConfig from_key_values(const KeyValues& kv) {
  kv.require_known(experiment_keys());
  ExperimentConfig c;
  auto size = [&](const std::string& key, std::size_t fallback) {
    return static_cast<std::size_t>(kv.get_uint(key, fallback));
  };
  c.topology = parse_topology(kv.get_string("topology", "direct"));
  c.model = read_model_config(kv, c.model);
  if (kv.contains("seeds")) {
    c.seeds.clear();
    for (const auto& s : split_list(kv.get_string("seeds", ""))) {
      KeyValues one;
      one.set("seed", s);
      c.seeds.push_back(one.get_uint("seed", 0));
    }
    if (c.seeds.empty()) throw ConfigError("seeds: empty list");
  }
  if (kv.contains("seed")) c.seeds = {kv.get_uint("seed", 1)};
  c.out = kv.get_string("out", c.out.string());

  auto& g = c.data.gen;
  g.seed = kv.get_uint("data.seed", g.seed);
  g.vocab_size = size("data.vocab_size", g.vocab_size);
  g.min_len = size("data.min_len", g.min_len);
  g.max_len = size("data.max_len", g.max_len);
  g.min_frames_per_token = size("data.min_frames_per_token", g.min_frames_per_token);
  g.max_frames_per_token = size("data.max_frames_per_token", g.max_frames_per_token);
  g.noise_sigma = kv.get_double("data.noise_sigma", g.noise_sigma);
  c.data.n_train = size("data.n_train", c.data.n_train);
  c.data.n_dev = size("data.n_dev", c.data.n_dev);
  c.data.n_test = size("data.n_test", c.data.n_test);
  c.data.split_seed = kv.get_uint("data.split_seed", c.data.split_seed);
  g.n_examples = c.data.n_train + c.data.n_dev + c.data.n_test;

  auto& t = c.train;
  t.epochs = size("train.epochs", t.epochs);
  t.batch_size = size("train.batch_size", t.batch_size);
  t.max_len = size("train.max_len", t.max_len);
  t.learning_rate = kv.get_double("train.learning_rate", t.learning_rate);
  t.decay_factor = kv.get_double("train.decay_factor", t.decay_factor);
  t.patience = static_cast<int>(kv.get_int("train.patience", t.patience));
  c.initial_encoder_layers = size("train.initial_encoder_layers", c.initial_encoder_layers);
  t.grow_every = size("train.grow_every", t.grow_every);
  t.accuracy_threshold = kv.get_double("train.accuracy_threshold", t.accuracy_threshold);
  t.stop_at_threshold = kv.get_bool("train.stop_at_threshold", t.stop_at_threshold);
  t.clip_norm = kv.get_double("train.clip_norm", t.clip_norm);
  t.freeze = split_list(kv.get_string("train.freeze", ""));
  t.keep_all_checkpoints = kv.get_bool("train.keep_all_checkpoints", t.keep_all_checkpoints);
  c.final_beam = size("train.final_beam", c.final_beam);

  c.transplant.grafts = parse_scheme(kv.get_string("transplant.scheme", "none"));
  c.transplant.adapter = kv.get_bool("transplant.adapter", false);
  c.transplant.asr_checkpoint = kv.get_string("transplant.asr_checkpoint", "");
  c.transplant.mt_checkpoint = kv.get_string("transplant.mt_checkpoint", "");
  c.transplant.exclude = split_list(kv.get_string("transplant.exclude", ""));

  if (t.decay_factor <= 0.0 || t.decay_factor >= 1.0) throw ConfigError("train.decay_factor must lie in (0, 1)");
  if (t.patience < 1) throw ConfigError("train.patience must be at least 1");
  if (c.final_beam == 0) throw ConfigError("train.final_beam must be positive");
  if (c.initial_encoder_layers > c.model.encoder_layers) {
    throw ConfigError("train.initial_encoder_layers exceeds model.encoder_layers");
  }
  c.model.validate();
  return c;
}

PreparedData prepare_data(const DataConfig& cfg) {
  PreparedData p;
  GenerationParams gen = cfg.gen;
  gen.n_examples = cfg.n_train + cfg.n_dev + cfg.n_test;
  p.dataset = generate(gen);
  const double n = static_cast<double>(gen.n_examples);
  p.splits = split(p.dataset.examples,
                   {static_cast<double>(cfg.n_train) / n, static_cast<double>(cfg.n_dev) / n,
                    static_cast<double>(cfg.n_test) / n},
                   cfg.split_seed);
  return p;
}

void fit_model_to_data(ModelConfig& model, const Dataset& dataset) {
  model.feature_dim = dataset.feature_dim();
  model.source_vocab = dataset.source.size();
  model.target_vocab = dataset.target.size();
}

Checkpoint load_checkpoint_or_run(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) return load_checkpoint(best_checkpoint(path));
  return load_checkpoint(path);
}

InitializedModel initialize_model(const ExperimentConfig& cfg, const Dataset& dataset, std::uint64_t seed) {
  ModelConfig mc = cfg.model;
  fit_model_to_data(mc, dataset);
  const bool grafts_encoder = std::any_of(cfg.transplant.grafts.begin(), cfg.transplant.grafts.end(),
                                          [](GraftKind k) { return k == GraftKind::kAsrEnc; });
  const std::size_t depth = grafts_encoder ? 0 : cfg.initial_encoder_layers;
  InitializedModel m;
  m.graph = build(mc, cfg.topology, depth);
  m.store = init_store(m.graph, seed);
  if (cfg.transplant.adapter) {
    m.graph = insert_adapter(m.graph, m.store, default_adapter_position(cfg.topology));
  }
  if (cfg.transplant.grafts.empty()) return m;

  std::optional<Checkpoint> asr, mt;
  TransplantScheme scheme;
  scheme.adapter = cfg.transplant.adapter;
  scheme.exclude = cfg.transplant.exclude;
  for (GraftKind k : cfg.transplant.grafts) {
    std::optional<Checkpoint>& src = graft_uses_asr(k) ? asr : mt;
    const auto& path = graft_uses_asr(k) ? cfg.transplant.asr_checkpoint : cfg.transplant.mt_checkpoint;
    if (!src) {
      if (path.empty()) {
        throw ConfigError(std::string("scheme needs transplant.") + (graft_uses_asr(k) ? "asr" : "mt") +
                          "_checkpoint");
      }
      src = load_checkpoint_or_run(path);
    }
    scheme.grafts.push_back({k, src->params});
  }
  m.report = apply_transplant(m.graph, m.store, scheme);
  return m;
}

std::string RunSummary::to_json() const {
  ordered_json j;
  j["label"] = label;
  j["topology"] = topology;
  j["ctc"] = ctc;
  j["scheme"] = scheme;
  j["adapter"] = adapter;
  j["seed"] = seed;
  j["best_step"] = best_step;
  j["epochs_run"] = epochs_run;
  j["epochs_to_threshold"] = epochs_to_threshold ? ordered_json(*epochs_to_threshold) : ordered_json(nullptr);
  j["dev_accuracy"] = dev_accuracy;
  j["dev"] = report_json(dev);
  j["test"] = report_json(test);
  return j.dump(2);
}

RunSummary RunSummary::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    RunSummary s;
    s.label = j.at("label").get<std::string>();
    s.topology = j.at("topology").get<std::string>();
    s.ctc = j.at("ctc").get<bool>();
    s.scheme = j.at("scheme").get<std::string>();
    s.adapter = j.at("adapter").get<bool>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.best_step = j.at("best_step").get<std::uint64_t>();
    s.epochs_run = j.at("epochs_run").get<std::size_t>();
    if (!j.at("epochs_to_threshold").is_null()) s.epochs_to_threshold = j.at("epochs_to_threshold").get<std::size_t>();
    s.dev_accuracy = j.at("dev_accuracy").get<double>();
    s.dev = report_from_json(j.at("dev"));
    s.test = report_from_json(j.at("test"));
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed run summary: ") + e.what());
  }
}

TrainOutcome cmd_train(const ExperimentConfig& cfg, std::uint64_t seed, const std::filesystem::path& out,
                       const RowSink& progress) {
  PreparedData data = prepare_data(cfg.data);
  InitializedModel init = initialize_model(cfg, data.dataset, seed);
  TrainOptions topts = cfg.train;
  topts.seed = seed;

  ExperimentConfig resolved = cfg;
  resolved.seeds = {seed};
  resolved.out = out;
  const std::string config_text = to_key_values(resolved).to_text();

  std::ofstream metrics;
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    write_file_atomic(out / "config.txt", config_text);
    metrics.open(out / "metrics.jsonl", std::ios::trunc);
    if (!metrics) throw IoError("cannot write " + (out / "metrics.jsonl").string());
    if (init.report) {
      ordered_json r;
      r["grafted"] = init.report->grafted;
      r["fresh"] = init.report->fresh;
      r["reinitialized"] = init.report->reinitialized;
      r["excluded"] = init.report->excluded;
      write_file_atomic(out / "transplant.json", r.dump(2) + "\n");
    }
  }
  RowSink sink;
  if (!out.empty()) {
    sink = [&](const EvalRow& row) {
      metrics << row.to_json() << '\n';
      metrics.flush();
      if (!metrics) throw IoError("write failed for " + (out / "metrics.jsonl").string());
      if (progress) progress(row);
    };
  } else {
    sink = progress;
  }

  TrainOutcome o;
  o.result = train(init.graph, std::move(init.store), data.splits.train, data.splits.dev, data.dataset.source,
                   data.dataset.target, topts, out, sink, config_text);

  RunSummary& s = o.summary;
  s.label = cfg.label();
  s.topology = topology_name(cfg.topology);
  s.ctc = cfg.model.ctc;
  s.scheme = scheme_name(cfg.transplant.grafts);
  s.adapter = cfg.transplant.adapter;
  s.seed = seed;
  s.best_step = o.result.best_step;
  s.epochs_to_threshold = o.result.epochs_to_threshold;
  s.epochs_run = o.result.rows.back().epoch;
  for (const auto& row : o.result.rows) {
    if (row.step == o.result.best_step && row.best) s.dev_accuracy = row.dev.tokens.accuracy();
  }
  // The graph at the best step can be shallower than the final one under growth.
  ModelGraph best_graph = o.result.graph;
  std::size_t best_layers = best_graph.active_encoder_layers;
  for (const auto& row : o.result.rows) {
    if (row.step == o.result.best_step) best_layers = row.encoder_layers;
  }
  best_graph.active_encoder_layers = best_layers;
  std::vector<std::string> dev_hyps, test_hyps;
  s.dev = score_split(best_graph, o.result.best_params, data.splits.dev, data.dataset, cfg.final_beam,
                      cfg.train.max_len, &dev_hyps);
  s.test = score_split(best_graph, o.result.best_params, data.splits.test, data.dataset, cfg.final_beam,
                       cfg.train.max_len, &test_hyps);
  if (!out.empty()) {
    write_lines(out / "dev.hyp", dev_hyps);
    write_lines(out / "test.hyp", test_hyps);
    write_file_atomic(out / "run.json", s.to_json() + "\n");
  }
  return o;
}

MetricReport score_files(const std::filesystem::path& hyp, const std::filesystem::path& ref, bool case_sensitive,
                         bool with_wer) {
  const auto hyps = read_lines(hyp);
  const auto refs = read_lines(ref);
  return score_corpus(hyps, refs, case_sensitive, with_wer);
}

MetricReport cmd_eval(const EvalRequest& req) {
  const Checkpoint first = load_checkpoint_or_run(req.checkpoint);
  const ExperimentConfig cfg = from_key_values(KeyValues::parse(first.run_config, "checkpoint run config"));
  PreparedData data = prepare_data(cfg.data);
  {
    ModelConfig fitted = first.graph.config;
    fit_model_to_data(fitted, data.dataset);
    if (fitted.source_vocab != first.graph.config.source_vocab ||
        fitted.target_vocab != first.graph.config.target_vocab ||
        fitted.feature_dim != first.graph.config.feature_dim) {
      throw DataError("checkpoint vocabulary does not match its dataset");
    }
  }
  const auto& examples = split_by_name(data.splits, req.split);
  std::vector<std::string> hyps, refs;
  MetricReport m;
  if (!req.second_checkpoint.empty()) {
    const Checkpoint second = load_checkpoint_or_run(req.second_checkpoint);
    if (second.graph.config.target_vocab != data.dataset.target.size()) {
      throw DataError("MT checkpoint vocabulary does not match the dataset");
    }
    DecodeOptions opts;
    opts.beam = req.beam;
    for (const auto& ex : examples) {
      CascadeResult c = cascade(first.graph, first.params, second.graph, second.params, ex.frames, opts);
      hyps.push_back(c.empty_transcript ? ""
                                        : data.dataset.target.join(content_tokens(c.translation, data.dataset.target)));
      refs.push_back(data.dataset.target.join(ex.translation));
    }
    m = score_corpus(hyps, refs, req.case_sensitive, false);
  } else {
    m = score_split(first.graph, first.params, examples, data.dataset, req.beam, cfg.train.max_len, &hyps);
  }
  if (!req.out.empty()) {
    std::filesystem::create_directories(req.out);
    write_lines(req.out / (req.split + ".hyp"), hyps);
    write_file_atomic(req.out / "metrics.json", m.to_json() + "\n");
  }
  return m;
}

std::string format_compare_table(const std::vector<CompareRow>& rows) {
  std::size_t w = 6;
  for (const auto& r : rows) w = std::max(w, r.label.size());
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %4s  %8s  %8s  %9s  %9s  %7s\n", static_cast<int>(w), "method", "runs",
                "dev BLEU", "dev TER", "test BLEU", "test TER", "epochs");
  out += buf;
  for (const auto& r : rows) {
    std::string ep = r.epochs_to_threshold ? format_double(*r.epochs_to_threshold) : "-";
    std::snprintf(buf, sizeof buf, "%-*s  %4zu  %8.2f  %8.2f  %9.2f  %9.2f  %7s\n", static_cast<int>(w),
                  r.label.c_str(), r.runs, r.dev_bleu, r.dev_ter, r.test_bleu, r.test_ter, ep.c_str());
    out += buf;
  }
  return out;
}

std::vector<CompareRow> cmd_compare(const std::vector<std::filesystem::path>& run_dirs,
                                    const std::filesystem::path& out) {
  if (run_dirs.size() < 2) throw ConfigError("compare needs at least two run directories");
  std::vector<std::string> order;
  std::map<std::string, std::vector<RunSummary>> groups;
  for (const auto& dir : run_dirs) {
    const auto path = dir / "run.json";
    if (!std::filesystem::exists(path)) throw IoError("missing run record " + path.string());
    RunSummary s = RunSummary::from_json(read_file(path));
    if (!groups.count(s.label)) order.push_back(s.label);
    groups[s.label].push_back(std::move(s));
  }
  std::vector<CompareRow> rows;
  for (const auto& label : order) {
    const auto& runs = groups[label];
    CompareRow r;
    r.label = label;
    r.runs = runs.size();
    auto col = [&](auto get) {
      std::vector<double> v;
      for (const auto& s : runs) v.push_back(get(s));
      return median(v);
    };
    r.dev_bleu = col([](const RunSummary& s) { return s.dev.bleu.bleu; });
    r.dev_ter = col([](const RunSummary& s) { return s.dev.ter.percent; });
    r.test_bleu = col([](const RunSummary& s) { return s.test.bleu.bleu; });
    r.test_ter = col([](const RunSummary& s) { return s.test.ter.percent; });
    std::vector<double> ep;
    for (const auto& s : runs) {
      if (s.epochs_to_threshold) ep.push_back(static_cast<double>(*s.epochs_to_threshold));
    }
    if (ep.size() * 2 > runs.size()) {
      // Runs that never reached the threshold count as slower than any that did.
      while (ep.size() < runs.size()) ep.push_back(1e9);
      r.epochs_to_threshold = median(ep);
    }
    rows.push_back(r);
  }
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    ordered_json j = ordered_json::array();
    for (const auto& r : rows) {
      ordered_json o;
      o["method"] = r.label;
      o["runs"] = r.runs;
      o["dev_bleu"] = r.dev_bleu;
      o["dev_ter"] = r.dev_ter;
      o["test_bleu"] = r.test_bleu;
      o["test_ter"] = r.test_ter;
      o["epochs_to_threshold"] = r.epochs_to_threshold ? ordered_json(*r.epochs_to_threshold) : ordered_json(nullptr);
      j.push_back(o);
    }
    write_file_atomic(out / "compare.json", j.dump(2) + "\n");
    write_file_atomic(out / "compare.txt", format_compare_table(rows));
  }
  return rows;
}

void cmd_generate_data(const DataConfig& cfg, const std::filesystem::path& out) {
  PreparedData p = prepare_data(cfg);
  std::filesystem::create_directories(out);
  write_manifest(out / "manifest.json", p.dataset);
  write_examples(out / "train.tsv", p.splits.train, p.dataset.source, p.dataset.target);
  write_examples(out / "dev.tsv", p.splits.dev, p.dataset.source, p.dataset.target);
  write_examples(out / "test.tsv", p.splits.test, p.dataset.source, p.dataset.target);
}

TransplantReport cmd_transplant(const ExperimentConfig& cfg, std::uint64_t seed, const std::filesystem::path& out) {
  if (cfg.transplant.grafts.empty() && !cfg.transplant.adapter) {
    throw ConfigError("transplant: empty scheme and no adapter");
  }
  PreparedData data = prepare_data(cfg.data);
  InitializedModel m = initialize_model(cfg, data.dataset, seed);
  TransplantReport report = m.report.value_or(TransplantReport{});
  if (!m.report) {
    for (const auto& [name, value] : m.store) report.fresh.push_back(name);
  }
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    ExperimentConfig resolved = cfg;
    resolved.seeds = {seed};
    Checkpoint ck;
    ck.graph = m.graph;
    ck.run_config = to_key_values(resolved).to_text();
    ck.params = m.store;
    save_checkpoint(ck, checkpoint_path(out, 0));
    write_best_marker(out, 0);
    ordered_json r;
    r["grafted"] = report.grafted;
    r["fresh"] = report.fresh;
    r["reinitialized"] = report.reinitialized;
    r["excluded"] = report.excluded;
    r["unused_source"] = report.unused_source;
    write_file_atomic(out / "transplant.json", r.dump(2) + "\n");
  }
  return report;
}

}  // namespace e2est
