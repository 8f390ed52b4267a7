// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace e2est {

using Words = std::vector<std::string>;

Words tokenize(std::string_view line, bool case_sensitive = true);

struct BleuResult {
  double bleu = 0.0;  // percent
  std::array<double, 4> precisions{};
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  double brevity_penalty = 0.0;
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;
};

/// Corpus BLEU over 1..4-grams with clipped counts, no smoothing. An order
/// for which neither side has any n-gram is left out of the geometric mean.
BleuResult bleu(const std::vector<std::string>& hyps, const std::vector<std::string>& refs,
                bool case_sensitive = true);

struct TerEdits {
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t substitutions = 0;
  std::size_t shifts = 0;
  std::size_t total() const { return insertions + deletions + substitutions + shifts; }
};

/// Edits of one pair under the greedy block-shift search (shift cost 1,
/// blocks up to 10 words, moves up to 50 positions).
TerEdits ter_edits(const Words& hyp, const Words& ref);
/// Edit distance without shifts.
std::size_t levenshtein(const Words& hyp, const Words& ref);

struct RatioResult {
  double percent = 0.0;
  std::size_t edits = 0;
  std::size_t ref_words = 0;
};

/// Corpus TER: summed edits over summed reference words.
RatioResult ter(const std::vector<std::string>& hyps, const std::vector<std::string>& refs,
                bool case_sensitive = true);
/// Corpus WER: summed Levenshtein distances over summed reference words.
RatioResult wer(const std::vector<std::string>& hyps, const std::vector<std::string>& refs,
                bool case_sensitive = true);

struct MetricReport {
  std::size_t sentences = 0;
  BleuResult bleu;
  RatioResult ter;
  std::optional<RatioResult> wer;
  std::string to_json() const;
};

MetricReport score_corpus(const std::vector<std::string>& hyps, const std::vector<std::string>& refs,
                          bool case_sensitive = true, bool with_wer = false);

}  // namespace e2est
