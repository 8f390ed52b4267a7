// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "e2est/errors.hpp"
#include "e2est/experiment.hpp"

namespace fs = std::filesystem;
using namespace e2est;

namespace {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigExit = 2,
  kDataExit = 3,
  kIoExit = 4,
  kDivergenceExit = 5,
  kTransplantExit = 6,
};

// Options shared by commands that read an experiment configuration.
struct ConfigFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> beam;
  std::string ctc, topology, scheme, adapter;
  std::map<std::string, std::string> keys;

  void attach(CLI::App* app, bool with_model) {
    app->add_option("--config", config, "key = value configuration file");
    app->add_option("--seed", seed, "run seed (overrides seeds)");
    app->add_option("--out", out, "output directory");
    if (!with_model) {
      for (const auto& k : experiment_keys()) {
        if (k.rfind("data.", 0) == 0) app->add_option("--" + k, keys[k], "config key " + k);
      }
      return;
    }
    app->add_option("--beam", beam, "beam size for the final evaluation (default 12)");
    app->add_option("--ctc", ctc, "auxiliary CTC loss on|off");
    app->add_option("--topology", topology, "direct, asr, mt, one2many, many2one, tied_cascade, tied_triangle");
    app->add_option("--scheme", scheme, "transplant scheme, e.g. asr_enc+mt_dec");
    app->add_option("--adapter", adapter, "adapter layer on|off");
    for (const auto& k : experiment_keys()) {
      if (k == "seed" || k == "out" || k == "topology") continue;
      app->add_option("--" + k, keys[k], "config key " + k);
    }
  }

  KeyValues resolve() const {
    KeyValues kv = config.empty() ? KeyValues{} : KeyValues::load(config);
    KeyValues over;
    for (const auto& [k, v] : keys) {
      if (!v.empty()) over.set(k, v);
    }
    if (!ctc.empty()) over.set("model.ctc", ctc);
    if (!topology.empty()) over.set("topology", topology);
    if (!scheme.empty()) over.set("transplant.scheme", scheme);
    if (!adapter.empty()) over.set("transplant.adapter", adapter);
    if (beam) over.set("train.final_beam", std::to_string(*beam));
    if (seed) over.set("seed", std::to_string(*seed));
    if (!out.empty()) over.set("out", out);
    kv.merge(over);
    return kv;
  }
};

void print_row(const EvalRow& row) {
  std::fprintf(stderr, "epoch %3zu  step %6llu  layers %zu  loss %8.4f  acc %6.2f%%  bleu %6.2f  ter %6.2f  lr %.3g%s\n",
               row.epoch, static_cast<unsigned long long>(row.step), row.encoder_layers, row.train.combined,
               100.0 * row.dev.tokens.accuracy(), row.dev.bleu, row.dev.ter, row.learning_rate,
               row.best ? "  *" : "");
}

void print_report(const std::string& name, const MetricReport& m) {
  std::printf("%s: BLEU %.2f (%.1f/%.1f/%.1f/%.1f, BP %.3f)  TER %.2f", name.c_str(), m.bleu.bleu,
              100 * m.bleu.precisions[0], 100 * m.bleu.precisions[1], 100 * m.bleu.precisions[2],
              100 * m.bleu.precisions[3], m.bleu.brevity_penalty, m.ter.percent);
  if (m.wer) std::printf("  WER %.2f", m.wer->percent);
  std::printf("  (%zu sentences)\n", m.sentences);
}

int run_train(const ConfigFlags& flags) {
  const ExperimentConfig cfg = from_key_values(flags.resolve());
  const bool many = cfg.seeds.size() > 1;
  for (std::uint64_t seed : cfg.seeds) {
    const fs::path out = many ? cfg.out / ("seed-" + std::to_string(seed)) : cfg.out;
    std::fprintf(stderr, "training %s seed %llu -> %s\n", cfg.label().c_str(), static_cast<unsigned long long>(seed),
                 out.string().c_str());
    TrainOutcome o = cmd_train(cfg, seed, out, print_row);
    std::printf("%s seed %llu: best step %llu, epochs to threshold %s\n", o.summary.label.c_str(),
                static_cast<unsigned long long>(seed), static_cast<unsigned long long>(o.summary.best_step),
                o.summary.epochs_to_threshold ? std::to_string(*o.summary.epochs_to_threshold).c_str() : "-");
    print_report("dev", o.summary.dev);
    print_report("test", o.summary.test);
  }
  return kOk;
}

std::vector<fs::path> expand_runs(const std::vector<std::string>& dirs) {
  std::vector<fs::path> out;
  for (const auto& d : dirs) {
    if (fs::exists(fs::path(d) / "run.json")) {
      out.emplace_back(d);
      continue;
    }
    std::vector<fs::path> nested;
    if (fs::is_directory(d)) {
      for (const auto& e : fs::directory_iterator(d)) {
        if (e.is_directory() && fs::exists(e.path() / "run.json")) nested.push_back(e.path());
      }
    }
    if (nested.empty()) throw IoError("no run record under " + d);
    std::sort(nested.begin(), nested.end());
    out.insert(out.end(), nested.begin(), nested.end());
  }
  return out;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"End-to-end speech translation experiments on synthetic data"};
  app.require_subcommand(1);

  ConfigFlags train_flags;
  auto* train = app.add_subcommand("train", "train one model per seed");
  train_flags.attach(train, true);

  EvalRequest eval_req;
  std::string hyp, ref;
  bool lowercase = false, with_wer = false;
  auto* eval = app.add_subcommand("eval", "decode a split and score it, or score hypothesis files");
  eval->add_option("--checkpoint", eval_req.checkpoint, "checkpoint file or run directory");
  eval->add_option("--mt", eval_req.second_checkpoint, "MT checkpoint for a cascade with an ASR --checkpoint");
  eval->add_option("--split", eval_req.split, "train, dev or test")->capture_default_str();
  eval->add_option("--beam", eval_req.beam, "beam size")->capture_default_str();
  eval->add_option("--out", eval_req.out, "output directory");
  eval->add_option("--hyp", hyp, "hypothesis file, one sentence per line");
  eval->add_option("--ref", ref, "reference file, one sentence per line");
  eval->add_flag("--lowercase", lowercase, "case-insensitive scoring");
  eval->add_flag("--wer", with_wer, "also report WER for --hyp/--ref");

  std::vector<std::string> runs;
  std::string compare_out;
  auto* compare = app.add_subcommand("compare", "median table over completed runs");
  compare->add_option("runs", runs, "run directories (or parents of seed-* runs)")->required();
  compare->add_option("--out", compare_out, "directory for compare.json and compare.txt");

  ConfigFlags data_flags;
  auto* gen = app.add_subcommand("generate-data", "write the synthetic dataset");
  data_flags.attach(gen, false);

  ConfigFlags tp_flags;
  auto* tp = app.add_subcommand("transplant", "initialize a model from pre-trained components");
  tp_flags.attach(tp, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigExit;
  }

  if (*train) return run_train(train_flags);
  if (*eval) {
    eval_req.case_sensitive = !lowercase;
    MetricReport m;
    if (!hyp.empty() || !ref.empty()) {
      if (hyp.empty() || ref.empty()) throw ConfigError("--hyp and --ref go together");
      m = score_files(hyp, ref, eval_req.case_sensitive, with_wer);
      if (!eval_req.out.empty()) {
        fs::create_directories(eval_req.out);
        write_file_atomic(eval_req.out / "metrics.json", m.to_json() + "\n");
      }
    } else {
      if (eval_req.checkpoint.empty()) throw ConfigError("eval needs --checkpoint or --hyp/--ref");
      if (eval_req.beam == 0) throw ConfigError("--beam must be positive");
      m = cmd_eval(eval_req);
    }
    print_report(eval_req.split, m);
    return kOk;
  }
  if (*compare) {
    auto rows = cmd_compare(expand_runs(runs), compare_out);
    std::fputs(format_compare_table(rows).c_str(), stdout);
    return kOk;
  }
  if (*gen) {
    const ExperimentConfig cfg = from_key_values(data_flags.resolve());
    cmd_generate_data(cfg.data, cfg.out);
    std::printf("wrote %zu/%zu/%zu examples to %s\n", cfg.data.n_train, cfg.data.n_dev, cfg.data.n_test,
                cfg.out.string().c_str());
    return kOk;
  }
  if (*tp) {
    const ExperimentConfig cfg = from_key_values(tp_flags.resolve());
    TransplantReport r = cmd_transplant(cfg, cfg.seeds.front(), cfg.out);
    std::printf("%s: %zu grafted, %zu fresh, %zu reinitialized, %zu excluded\n", cfg.label().c_str(),
                r.grafted.size(), r.fresh.size(), r.reinitialized.size(), r.excluded.size());
    return kOk;
  }
  return kFailure;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataExit;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << '\n';
    return kDivergenceExit;
  } catch (const TransplantError& e) {
    std::cerr << "transplant error: " << e.what() << '\n';
    return kTransplantExit;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kIoExit;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kIoExit;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kIoExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
