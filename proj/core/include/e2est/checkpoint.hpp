// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "e2est/model.hpp"
#include "e2est/optim.hpp"
#include "e2est/param_store.hpp"

namespace e2est {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::uint64_t step = 0;
  ModelGraph graph;
  std::string run_config;  // free-form key/value text of the producing run
  ParamStore params;
  std::optional<OptimizerState> optimizer;
  std::vector<double> dev_history;
};

/// Byte layout, all integers little-endian, doubles as IEEE-754 bit patterns:
///   "E2STCKPT" u32 version u64 step
///   str graph   str run_config   u64 rng_seed
///   u64 n, n x (str name, u32 rank, rank x u64 dim, numel x f64)
///   u8 has_optimizer [u64 step, f64 lr, f64 beta1, f64 beta2, f64 eps,
///                     first-moment tensors, second-moment tensors]
///   u64 n, n x f64 dev history
///   u32 crc32 of everything before it
/// where str is u64 length + bytes.
std::string encode_checkpoint(const Checkpoint& ckpt);
/// Throws CheckpointError on any corruption or version mismatch.
Checkpoint decode_checkpoint(std::string_view bytes);

/// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// runs/<name>/ckpt-<step>
std::filesystem::path checkpoint_path(const std::filesystem::path& run_dir, std::uint64_t step);
/// Points run_dir/best at the checkpoint of `step`.
void write_best_marker(const std::filesystem::path& run_dir, std::uint64_t step);
std::filesystem::path best_checkpoint(const std::filesystem::path& run_dir);

/// Writes `contents` atomically (temporary file + rename).
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace e2est
