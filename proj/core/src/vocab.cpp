// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#include "e2est/vocab.hpp"

#include <sstream>

#include "e2est/errors.hpp"

namespace e2est {

Vocabulary::Vocabulary(std::vector<std::string> content_tokens) {
  tokens_ = {"<pad>", "<s>", "</s>"};
  tokens_.insert(tokens_.end(), content_tokens.begin(), content_tokens.end());
  tokens_.push_back("<blank>");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) throw DataError("duplicate vocabulary token: " + tokens_[i]);
  }
}

Vocabulary Vocabulary::synthetic(std::string_view prefix, std::size_t n) {
  std::vector<std::string> toks;
  toks.reserve(n);
  for (std::size_t i = 0; i < n; ++i) toks.push_back(std::string(prefix) + std::to_string(i));
  return Vocabulary(std::move(toks));
}

const std::string& Vocabulary::token(std::size_t id) const {
  if (id >= tokens_.size()) throw DataError("token id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

std::size_t Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) throw DataError("unknown token: " + std::string(token));
  return it->second;
}

std::string Vocabulary::join(std::span<const std::size_t> ids) const {
  std::string out;
  for (std::size_t id : ids) {
    if (!is_content(id)) continue;
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

TokenIds Vocabulary::parse(std::string_view line) const {
  std::istringstream is{std::string(line)};
  TokenIds ids;
  std::string tok;
  while (is >> tok) {
    const std::size_t i = id(tok);
    if (!is_content(i)) throw DataError("reserved token inside a sequence: " + tok);
    ids.push_back(i);
  }
  return ids;
}

TokenIds strip_eos(std::span<const std::size_t> ids) {
  TokenIds out(ids.begin(), ids.end());
  if (!out.empty() && out.back() == Vocabulary::kEos) out.pop_back();
  return out;
}

}  // namespace e2est
