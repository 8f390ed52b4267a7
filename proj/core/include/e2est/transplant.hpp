// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "e2est/checkpoint.hpp"
#include "e2est/model.hpp"

namespace e2est {

enum class GraftKind {
  kAsrEnc,     // encoder.      <- ASR encoder.
  kAsrDec,     // decoder_asr.  <- ASR decoder_asr.
  kMtEnc,      // text_encoder. <- MT text_encoder.
  kMtDec,      // decoder_st.   <- MT decoder_st.
  kAsrDecToSt  // decoder_st.   <- ASR decoder_asr.; embedding/output reinitialized on vocabulary mismatch
};

std::string_view graft_name(GraftKind k);
GraftKind parse_graft(std::string_view name);
std::string_view graft_source_prefix(GraftKind k);
std::string_view graft_target_prefix(GraftKind k);
/// True for grafts that read an ASR checkpoint (as opposed to an MT one).
bool graft_uses_asr(GraftKind k);

struct Graft {
  GraftKind kind;
  ParamStore source;
};

struct TransplantScheme {
  std::vector<Graft> grafts;
  bool adapter = false;
  /// Target names containing any of these substrings keep their fresh values.
  std::vector<std::string> exclude;
  std::vector<std::string> freeze;
};

/// Parses "none" or a '+'-joined graft list such as "asr_enc+mt_dec".
std::vector<GraftKind> parse_scheme(std::string_view text);
std::string scheme_name(const std::vector<GraftKind>& kinds);

struct TransplantReport {
  std::vector<std::string> grafted;
  std::vector<std::string> fresh;
  std::vector<std::string> reinitialized;  // shape-flexible tensors left fresh
  std::vector<std::string> unused_source;
  std::vector<std::string> excluded;
};

/// Copies grafted tensors into `store`. Either every graft applies or the
/// store is left untouched and TransplantError is thrown.
TransplantReport apply_transplant(const ModelGraph& graph, ParamStore& store, const TransplantScheme& scheme);

}  // namespace e2est
