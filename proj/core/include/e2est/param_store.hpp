// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "e2est/tensor.hpp"

namespace e2est {

/// Named parameter tensors in deterministic insertion order.
///
/// Names are hierarchical, dot-separated component paths such as
/// "encoder.blstm3.fw.w_ih"; the first segment is the component prefix used
/// by checkpoint transplant.
class ParamStore {
 public:
  using Entry = std::pair<std::string, Tensor>;

  explicit ParamStore(std::uint64_t rng_seed = 0) : rng_seed_(rng_seed) {}

  std::uint64_t rng_seed() const { return rng_seed_; }
  void set_rng_seed(std::uint64_t seed) { rng_seed_ = seed; }

  /// Adds a new entry; throws ShapeError if `name` already exists.
  void add(std::string name, Tensor value);
  /// Replaces an existing entry; the shape must match.
  void assign(std::string_view name, Tensor value);

  bool contains(std::string_view name) const;
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t num_values() const;
  std::vector<std::string> names() const;
  /// Names whose component prefix (text before the first '.') equals `prefix`.
  std::vector<std::string> names_with_prefix(std::string_view prefix) const;

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

  bool operator==(const ParamStore& other) const { return entries_ == other.entries_; }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::uint64_t rng_seed_ = 0;
};

/// Component prefix of a parameter name ("encoder" for "encoder.blstm1.fw.b").
std::string_view component_of(std::string_view name);

enum class InitScheme { kUniformFanIn, kZeros };

/// Draws a tensor of `shape`. Uniform fan-in samples from
/// [-1/sqrt(fan_in), 1/sqrt(fan_in)] with fan_in = shape[0].
Tensor seeded_init(const Shape& shape, InitScheme scheme, std::mt19937_64& rng);

/// Engine seeded from (seed, name) so that a parameter's initial value does
/// not depend on which other parameters exist or in which order they are built.
std::mt19937_64 named_rng(std::uint64_t seed, std::string_view name);

std::uint64_t fnv1a64(std::string_view text);

}  // namespace e2est
