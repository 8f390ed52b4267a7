// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#include "e2est/transplant.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "e2est/errors.hpp"

namespace e2est {

namespace {

struct GraftInfo {
  GraftKind kind;
  std::string_view name, source, target;
  bool asr;
};

constexpr GraftInfo kGrafts[] = {
    {GraftKind::kAsrEnc, "asr_enc", "encoder", "encoder", true},
    {GraftKind::kAsrDec, "asr_dec", "decoder_asr", "decoder_asr", true},
    {GraftKind::kMtEnc, "mt_enc", "text_encoder", "text_encoder", false},
    {GraftKind::kMtDec, "mt_dec", "decoder_st", "decoder_st", false},
    {GraftKind::kAsrDecToSt, "asr_dec_to_st", "decoder_asr", "decoder_st", true},
};

const GraftInfo& info(GraftKind k) {
  for (const auto& g : kGrafts) {
    if (g.kind == k) return g;
  }
  throw TransplantError("unknown graft");
}

bool shape_flexible(std::string_view rest) { return rest == ".embed" || rest == ".out.w" || rest == ".out.b"; }

}  // namespace

std::string_view graft_name(GraftKind k) { return info(k).name; }
std::string_view graft_source_prefix(GraftKind k) { return info(k).source; }
std::string_view graft_target_prefix(GraftKind k) { return info(k).target; }
bool graft_uses_asr(GraftKind k) { return info(k).asr; }

GraftKind parse_graft(std::string_view name) {
  for (const auto& g : kGrafts) {
    if (g.name == name) return g.kind;
  }
  throw ConfigError("unknown graft '" + std::string(name) + "'");
}

std::vector<GraftKind> parse_scheme(std::string_view text) {
  std::vector<GraftKind> out;
  if (text.empty() || text == "none") return out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto plus = text.find('+', pos);
    if (plus == std::string_view::npos) plus = text.size();
    const GraftKind k = parse_graft(text.substr(pos, plus - pos));
    if (std::find(out.begin(), out.end(), k) != out.end()) {
      throw ConfigError("graft listed twice in scheme '" + std::string(text) + "'");
    }
    out.push_back(k);
    pos = plus + 1;
  }
  return out;
}

std::string scheme_name(const std::vector<GraftKind>& kinds) {
  if (kinds.empty()) return "none";
  std::string out;
  for (GraftKind k : kinds) {
    if (!out.empty()) out += '+';
    out += graft_name(k);
  }
  return out;
}

TransplantReport apply_transplant(const ModelGraph& graph, ParamStore& store, const TransplantScheme& scheme) {
  check_store(graph, store);
  std::set<std::string_view> targets;
  for (const auto& g : scheme.grafts) {
    if (!targets.insert(graft_target_prefix(g.kind)).second) {
      throw TransplantError("two grafts write into " + std::string(graft_target_prefix(g.kind)) + ".");
    }
  }

  TransplantReport report;
  std::map<std::string, const Tensor*> staged;
  for (const auto& g : scheme.grafts) {
    const std::string src(graft_source_prefix(g.kind));
    const std::string dst(graft_target_prefix(g.kind));
    const auto names = g.source.names_with_prefix(src);
    if (names.empty()) throw TransplantError("source checkpoint has no " + src + " component");
    if (store.names_with_prefix(dst).empty()) {
      throw TransplantError("target graph has no " + dst + " component for graft " + std::string(graft_name(g.kind)));
    }
    for (const auto& name : names) {
      const std::string rest = name.substr(src.size());
      const std::string target = dst + rest;
      if (!store.contains(target)) {
        report.unused_source.push_back(name);
        continue;
      }
      const bool excluded = std::any_of(scheme.exclude.begin(), scheme.exclude.end(),
                                        [&](const std::string& pat) { return target.find(pat) != std::string::npos; });
      if (excluded) {
        report.excluded.push_back(target);
        continue;
      }
      const Tensor& value = g.source.at(name);
      if (value.shape() != store.at(target).shape()) {
        if (g.kind == GraftKind::kAsrDecToSt && shape_flexible(rest)) {
          report.reinitialized.push_back(target);
          continue;
        }
        throw TransplantError("graft " + std::string(graft_name(g.kind)) + ": " + name + " has shape " +
                              shape_str(value.shape()) + " but " + target + " needs " +
                              shape_str(store.at(target).shape()));
      }
      staged[target] = &value;
    }
  }

  for (const auto& [name, value] : staged) store.assign(name, *value);
  for (const auto& [name, value] : store) {
    if (staged.count(name)) report.grafted.push_back(name);
    else report.fresh.push_back(name);
  }
  return report;
}

}  // namespace e2est
