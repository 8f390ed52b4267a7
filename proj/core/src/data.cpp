// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#include "e2est/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "e2est/ctc.hpp"
#include "e2est/errors.hpp"
#include "e2est/layers.hpp"
#include "json.hpp"

namespace e2est {

namespace {

constexpr std::uint64_t kCipherSeed = 0x5eed0c1f3e7ULL;

void validate(const GenerationParams& p) {
  if (p.vocab_size < 4) throw DataError("vocab_size must be at least 4");
  if (p.n_examples == 0) throw DataError("n_examples must be positive");
  if (p.min_len < 1 || p.min_len > p.max_len) throw DataError("invalid length range");
  if (p.min_frames_per_token < 2 || p.min_frames_per_token > p.max_frames_per_token) {
    throw DataError("invalid frames-per-token range (minimum is 2)");
  }
  if (!(p.noise_sigma >= 0.0) || !std::isfinite(p.noise_sigma)) throw DataError("noise_sigma must be >= 0");
}

std::string join_tokens(const Vocabulary& v, const TokenIds& ids) { return v.join(ids); }

}  // namespace

std::vector<std::size_t> cipher_permutation(std::size_t vocab_size) {
  std::vector<std::size_t> perm(vocab_size);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(kCipherSeed ^ vocab_size);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

TokenIds encipher(std::span<const std::size_t> transcript, std::span<const std::size_t> cipher) {
  TokenIds out;
  out.reserve(transcript.size());
  for (auto it = transcript.rbegin(); it != transcript.rend(); ++it) {
    const std::size_t k = *it - Vocabulary::kFirstContent;
    if (*it < Vocabulary::kFirstContent || k >= cipher.size()) throw DataError("transcript id outside content range");
    out.push_back(cipher[k] + Vocabulary::kFirstContent);
  }
  return out;
}

TokenIds decipher(std::span<const std::size_t> translation, std::span<const std::size_t> cipher) {
  std::vector<std::size_t> inverse(cipher.size());
  for (std::size_t k = 0; k < cipher.size(); ++k) inverse[cipher[k]] = k;
  TokenIds out;
  out.reserve(translation.size());
  for (std::size_t id : translation) {
    const std::size_t k = id - Vocabulary::kFirstContent;
    if (id < Vocabulary::kFirstContent || k >= inverse.size()) throw DataError("translation id outside content range");
    out.push_back(inverse[k] + Vocabulary::kFirstContent);
  }
  return out;
}

Dataset generate(const GenerationParams& params) {
  validate(params);
  Dataset ds;
  ds.params = params;
  ds.source = Vocabulary::synthetic("f", params.vocab_size);
  ds.target = Vocabulary::synthetic("e", params.vocab_size);
  ds.cipher = cipher_permutation(params.vocab_size);

  std::mt19937_64 rng(params.seed);
  std::uniform_int_distribution<std::size_t> len_dist(params.min_len, params.max_len);
  std::uniform_int_distribution<std::size_t> tok_dist(0, params.vocab_size - 1);
  std::uniform_int_distribution<std::size_t> rep_dist(params.min_frames_per_token, params.max_frames_per_token);
  std::normal_distribution<double> noise(0.0, params.noise_sigma > 0 ? params.noise_sigma : 1.0);

  const std::size_t F = params.vocab_size;
  ds.examples.reserve(params.n_examples);
  for (std::size_t n = 0; n < params.n_examples; ++n) {
    ExamplePair ex;
    ex.id = "syn-" + std::to_string(n);
    const std::size_t J = len_dist(rng);
    std::vector<std::size_t> content(J);
    for (auto& c : content) c = tok_dist(rng);
    std::vector<std::size_t> reps(J);
    for (auto& r : reps) r = rep_dist(rng);
    const std::size_t T = std::accumulate(reps.begin(), reps.end(), std::size_t{0});
    Tensor frames = Tensor::matrix(T, F);
    std::size_t t = 0;
    for (std::size_t j = 0; j < J; ++j) {
      for (std::size_t r = 0; r < reps[j]; ++r, ++t) {
        for (std::size_t d = 0; d < F; ++d) {
          const double base = d == content[j] ? 1.0 : 0.0;
          frames(t, d) = params.noise_sigma > 0 ? base + noise(rng) : base;
        }
      }
    }
    ex.frames = std::move(frames);
    for (std::size_t c : content) ex.transcript.push_back(c + Vocabulary::kFirstContent);
    ex.translation = encipher(ex.transcript, ds.cipher);
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

std::vector<ExamplePair> filter_examples(std::span<const ExamplePair> examples, const BatchOptions& opts,
                                         FilterReport* report) {
  FilterReport rep;
  std::vector<ExamplePair> kept;
  for (const auto& ex : examples) {
    if (ex.transcript.size() > opts.max_len || ex.translation.size() > opts.max_len) {
      ++rep.too_long;
      continue;
    }
    if (opts.check_ctc &&
        ctc::min_frames(ex.transcript) > layers::pooled_length(ex.num_frames(), opts.pools)) {
      ++rep.ctc_infeasible;
      continue;
    }
    kept.push_back(ex);
  }
  rep.kept = kept.size();
  if (report) *report = rep;
  if (kept.empty()) throw DataError("no examples left after filtering");
  return kept;
}

Batch collate(std::span<const ExamplePair* const> items, std::size_t extra_padding) {
  if (items.empty()) throw DataError("cannot collate an empty batch");
  Batch b;
  b.batch = items.size();
  b.feature_dim = items[0]->frames.cols();
  std::size_t steps = 0;
  for (const auto* ex : items) {
    if (ex->frames.cols() != b.feature_dim) throw DataError("inconsistent feature dimension in batch");
    steps = std::max(steps, ex->num_frames());
  }
  b.steps = steps + extra_padding;
  b.frames = Tensor::matrix(b.steps * b.batch, b.feature_dim);
  for (std::size_t i = 0; i < b.batch; ++i) {
    const auto& ex = *items[i];
    b.ids.push_back(ex.id);
    b.frame_lengths.push_back(ex.num_frames());
    b.transcripts.push_back(ex.transcript);
    b.translations.push_back(ex.translation);
    for (std::size_t t = 0; t < ex.num_frames(); ++t) {
      std::copy_n(ex.frames.data().begin() + t * b.feature_dim, b.feature_dim,
                  b.frames.data().begin() + (t * b.batch + i) * b.feature_dim);
    }
  }
  return b;
}

std::vector<Batch> make_batches(std::span<const ExamplePair> examples, const BatchOptions& opts,
                                FilterReport* report) {
  if (opts.batch_size == 0) throw DataError("batch_size must be positive");
  const auto kept = filter_examples(examples, opts, report);
  std::vector<Batch> out;
  std::vector<const ExamplePair*> chunk;
  for (std::size_t i = 0; i < kept.size(); i += opts.batch_size) {
    chunk.clear();
    for (std::size_t j = i; j < std::min(kept.size(), i + opts.batch_size); ++j) chunk.push_back(&kept[j]);
    out.push_back(collate(chunk, opts.extra_padding));
  }
  return out;
}

Splits split(std::span<const ExamplePair> examples, std::array<double, 3> fractions, std::uint64_t seed) {
  double total = 0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw DataError("split fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DataError("split fractions must sum to 1");
  const std::size_t n = examples.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::size_t n_train = static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n)));
  std::size_t n_dev = static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n)));
  n_train = std::min(n_train, n);
  n_dev = std::min(n_dev, n - n_train);
  if (fractions[2] == 0.0) n_train = n - n_dev;
  const std::size_t n_test = n - n_train - n_dev;
  const std::array<std::size_t, 3> counts = {n_train, n_dev, n_test};
  for (int k = 0; k < 3; ++k) {
    if (fractions[k] > 0 && counts[k] == 0) throw DataError("split with positive fraction is empty");
  }
  Splits s;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ex = examples[order[i]];
    if (i < n_train) s.train.push_back(ex);
    else if (i < n_train + n_dev) s.dev.push_back(ex);
    else s.test.push_back(ex);
  }
  return s;
}

void write_examples(const std::filesystem::path& path, std::span<const ExamplePair> examples,
                    const Vocabulary& source, const Vocabulary& target) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  char buf[32];
  for (const auto& ex : examples) {
    os << ex.id << '\t' << ex.frames.rows() << '\t' << ex.frames.cols() << '\t';
    for (std::size_t i = 0; i < ex.frames.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", ex.frames[i]);
      if (i) os << ' ';
      os << buf;
    }
    os << '\t' << join_tokens(source, ex.transcript) << '\t' << join_tokens(target, ex.translation) << '\n';
  }
  if (!os) throw IoError("write failed: " + path.string());
}

std::vector<ExamplePair> read_examples(const std::filesystem::path& path, const Vocabulary& source,
                                       const Vocabulary& target) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path.string());
  std::vector<ExamplePair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (line.back() == '\t') fields.push_back("");
    if (fields.size() != 6) throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 6 fields");
    ExamplePair ex;
    ex.id = fields[0];
    const std::size_t T = std::stoul(fields[1]);
    const std::size_t F = std::stoul(fields[2]);
    std::vector<double> values;
    values.reserve(T * F);
    const char* p = fields[3].c_str();
    char* end = nullptr;
    for (std::size_t i = 0; i < T * F; ++i) {
      values.push_back(std::strtod(p, &end));
      if (end == p) throw DataError(path.string() + ":" + std::to_string(lineno) + ": short frame data");
      p = end;
    }
    ex.frames = Tensor({T, F}, std::move(values));
    ex.frames.check_finite("frames");
    ex.transcript = source.parse(fields[4]);
    ex.translation = target.parse(fields[5]);
    out.push_back(std::move(ex));
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const Dataset& dataset) {
  const auto& p = dataset.params;
  nlohmann::ordered_json j;
  j["seed"] = p.seed;
  j["n_examples"] = p.n_examples;
  j["vocab_size"] = p.vocab_size;
  j["min_len"] = p.min_len;
  j["max_len"] = p.max_len;
  j["min_frames_per_token"] = p.min_frames_per_token;
  j["max_frames_per_token"] = p.max_frames_per_token;
  j["noise_sigma"] = p.noise_sigma;
  j["feature_dim"] = dataset.feature_dim();
  j["cipher"] = dataset.cipher;
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

GenerationParams read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path.string());
  try {
    const auto j = nlohmann::json::parse(is);
    GenerationParams p;
    p.seed = j.at("seed").get<std::uint64_t>();
    p.n_examples = j.at("n_examples").get<std::size_t>();
    p.vocab_size = j.at("vocab_size").get<std::size_t>();
    p.min_len = j.at("min_len").get<std::size_t>();
    p.max_len = j.at("max_len").get<std::size_t>();
    p.min_frames_per_token = j.at("min_frames_per_token").get<std::size_t>();
    p.max_frames_per_token = j.at("max_frames_per_token").get<std::size_t>();
    p.noise_sigma = j.at("noise_sigma").get<double>();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad manifest " + path.string() + ": " + e.what());
  }
}

}  // namespace e2est
