// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace e2est {

using TokenIds = std::vector<std::size_t>;

/// Bijective token <-> id map. Ids 0..2 are pad, begin- and end-of-sentence;
/// content tokens follow; the CTC blank takes the highest id.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kBos = 1;
  static constexpr std::size_t kEos = 2;
  static constexpr std::size_t kFirstContent = 3;

  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> content_tokens);

  /// Content tokens "<prefix>0" .. "<prefix><n-1>".
  static Vocabulary synthetic(std::string_view prefix, std::size_t n);

  /// Number of ids including reserved ones and the blank.
  std::size_t size() const { return tokens_.size(); }
  std::size_t blank() const { return tokens_.size() - 1; }
  /// Ids a decoder can emit: everything below the blank.
  std::size_t output_size() const { return blank(); }
  std::size_t content_size() const { return tokens_.size() - kFirstContent - 1; }

  bool is_content(std::size_t id) const { return id >= kFirstContent && id < blank(); }
  const std::string& token(std::size_t id) const;
  std::size_t id(std::string_view token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Space-joined content tokens; reserved ids are skipped.
  std::string join(std::span<const std::size_t> ids) const;
  /// Whitespace-split parse; throws DataError on unknown or reserved tokens.
  TokenIds parse(std::string_view line) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Drops a trailing end-of-sentence id, if present.
TokenIds strip_eos(std::span<const std::size_t> ids);

}  // namespace e2est
