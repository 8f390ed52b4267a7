// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#include "e2est/param_store.hpp"

#include <cmath>

#include "e2est/errors.hpp"

namespace e2est {

void ParamStore::add(std::string name, Tensor value) {
  if (index_.count(name)) throw ShapeError("duplicate parameter name: " + name);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(value));
}

void ParamStore::assign(std::string_view name, Tensor value) {
  Tensor& slot = at(name);
  if (!slot.same_shape(value)) {
    throw ShapeError("parameter " + std::string(name) + " has shape " + shape_str(slot.shape()) +
                     ", cannot assign " + shape_str(value.shape()));
  }
  slot = std::move(value);
}

bool ParamStore::contains(std::string_view name) const { return index_.count(std::string(name)) != 0; }

Tensor& ParamStore::at(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ShapeError("unknown parameter: " + std::string(name));
  return entries_[it->second].second;
}

const Tensor& ParamStore::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ShapeError("unknown parameter: " + std::string(name));
  return entries_[it->second].second;
}

std::size_t ParamStore::num_values() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, t] : entries_) out.push_back(name);
  return out;
}

std::vector<std::string> ParamStore::names_with_prefix(std::string_view prefix) const {
  std::vector<std::string> out;
  for (const auto& [name, t] : entries_) {
    if (component_of(name) == prefix) out.push_back(name);
  }
  return out;
}

std::string_view component_of(std::string_view name) {
  auto dot = name.find('.');
  return dot == std::string_view::npos ? name : name.substr(0, dot);
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::mt19937_64 named_rng(std::uint64_t seed, std::string_view name) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(fnv1a64(name)), static_cast<std::uint32_t>(fnv1a64(name) >> 32)};
  return std::mt19937_64(seq);
}

Tensor seeded_init(const Shape& shape, InitScheme scheme, std::mt19937_64& rng) {
  Tensor t(shape);  // rejects zero extents
  if (scheme == InitScheme::kZeros) return t;
  const double fan_in = static_cast<double>(shape.size() >= 2 ? shape[0] : shape_numel(shape));
  const double bound = 1.0 / std::sqrt(fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.storage()) v = dist(rng);
  return t;
}

}  // namespace e2est
