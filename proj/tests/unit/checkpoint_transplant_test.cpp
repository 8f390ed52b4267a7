// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>

#include "e2est/checkpoint.hpp"
#include "e2est/errors.hpp"
#include "e2est/transplant.hpp"
#include "test_util.hpp"

namespace e2est {
namespace {

using testing::tiny_config;

Checkpoint sample_checkpoint() {
  Checkpoint c;
  c.step = 42;
  c.graph = build(tiny_config(), Topology::kOne2Many);
  c.params = init_store(c.graph, 3);
  c.run_config = "topology = one2many\n";
  OptimizerState opt;
  opt.step = 5;
  opt.learning_rate = 9e-4;
  for (const auto& [name, t] : c.params) {
    opt.first_moment[name] = t;
    opt.second_moment[name] = Tensor(t.shape(), 0.25);
  }
  c.optimizer = opt;
  c.dev_history = {1.5, 3.25};
  return c;
}

TEST(Checkpoint, EncodeDecodeRoundTrip) {
  const Checkpoint c = sample_checkpoint();
  const std::string bytes = encode_checkpoint(c);
  const Checkpoint back = decode_checkpoint(bytes);
  EXPECT_EQ(back.step, c.step);
  EXPECT_EQ(back.graph, c.graph);
  EXPECT_EQ(back.run_config, c.run_config);
  EXPECT_EQ(back.params, c.params);
  EXPECT_EQ(back.params.rng_seed(), 3u);
  ASSERT_TRUE(back.optimizer);
  EXPECT_EQ(back.optimizer->step, 5u);
  EXPECT_EQ(back.optimizer->second_moment, c.optimizer->second_moment);
  EXPECT_EQ(back.dev_history, c.dev_history);
  EXPECT_EQ(encode_checkpoint(back), bytes);
}

TEST(Checkpoint, DetectsCorruption) {
  const std::string bytes = encode_checkpoint(sample_checkpoint());
  for (std::size_t pos : {std::size_t{3}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    std::string bad = bytes;
    bad[pos] = static_cast<char>(bad[pos] ^ 0x10);
    EXPECT_THROW(decode_checkpoint(bad), CheckpointError) << pos;
  }
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 9)), CheckpointError);
  EXPECT_THROW(decode_checkpoint(""), CheckpointError);
}

TEST(Checkpoint, FilesAndBestMarker) {
  const auto dir = std::filesystem::temp_directory_path() / "e2est_ckpt_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  Checkpoint c = sample_checkpoint();
  c.optimizer.reset();
  save_checkpoint(c, checkpoint_path(dir, 42));
  write_best_marker(dir, 42);
  EXPECT_EQ(best_checkpoint(dir), checkpoint_path(dir, 42));
  Checkpoint back = load_checkpoint(best_checkpoint(dir));
  EXPECT_FALSE(back.optimizer);
  EXPECT_EQ(back.params, c.params);
  EXPECT_THROW(load_checkpoint(dir / "ckpt-7"), IoError);
  std::filesystem::remove_all(dir);
}

struct Pretrained {
  ModelGraph asr, mt;
  ParamStore asr_params, mt_params;
};

Pretrained pretrained() {
  Pretrained p;
  p.asr = build(tiny_config(), Topology::kAsr);
  p.mt = build(tiny_config(), Topology::kMt);
  p.asr_params = init_store(p.asr, 101);
  p.mt_params = init_store(p.mt, 202);
  return p;
}

TEST(Transplant, SchemeParsing) {
  EXPECT_TRUE(parse_scheme("none").empty());
  auto k = parse_scheme("asr_enc+mt_dec");
  EXPECT_EQ(k, (std::vector<GraftKind>{GraftKind::kAsrEnc, GraftKind::kMtDec}));
  EXPECT_EQ(scheme_name(k), "asr_enc+mt_dec");
  EXPECT_THROW(parse_scheme("asr_enc+asr_enc"), ConfigError);
  EXPECT_THROW(parse_scheme("asr_enc+"), ConfigError);
  EXPECT_THROW(parse_scheme("bogus"), ConfigError);
}

TEST(Transplant, GraftsAreBitExact) {
  Pretrained p = pretrained();
  ModelGraph graph = build(tiny_config(), Topology::kDirect);
  ParamStore store = init_store(graph, 1);
  const ParamStore fresh = store;
  TransplantScheme s;
  s.grafts = {{GraftKind::kAsrEnc, p.asr_params}, {GraftKind::kMtDec, p.mt_params}};
  TransplantReport r = apply_transplant(graph, store, s);
  for (const auto& [name, t] : store) {
    const auto comp = component_of(name);
    if (comp == "encoder") EXPECT_EQ(t, p.asr_params.at(name)) << name;
    else if (comp == "decoder_st") EXPECT_EQ(t, p.mt_params.at(name)) << name;
    else EXPECT_EQ(t, fresh.at(name)) << name;
  }
  EXPECT_EQ(r.grafted.size() + r.fresh.size(), store.size());
  EXPECT_TRUE(r.fresh.empty());
}

TEST(Transplant, ExcludeKeepsFreshValues) {
  Pretrained p = pretrained();
  ModelGraph graph = build(tiny_config(), Topology::kDirect);
  ParamStore store = init_store(graph, 1);
  const ParamStore fresh = store;
  TransplantScheme s;
  s.grafts = {{GraftKind::kMtDec, p.mt_params}};
  s.exclude = {".embed"};
  TransplantReport r = apply_transplant(graph, store, s);
  EXPECT_EQ(store.at("decoder_st.embed"), fresh.at("decoder_st.embed"));
  EXPECT_EQ(store.at("decoder_st.out.w"), p.mt_params.at("decoder_st.out.w"));
  EXPECT_EQ(r.excluded, (std::vector<std::string>{"decoder_st.embed"}));
}

TEST(Transplant, FailureLeavesStoreUntouched) {
  Pretrained p = pretrained();
  ModelConfig wide = tiny_config();
  wide.decoder_hidden = 6;
  ModelGraph graph = build(wide, Topology::kDirect);
  ParamStore store = init_store(graph, 1);
  const ParamStore before = store;
  TransplantScheme s;
  s.grafts = {{GraftKind::kAsrEnc, p.asr_params}, {GraftKind::kMtDec, p.mt_params}};
  EXPECT_THROW(apply_transplant(graph, store, s), TransplantError);
  EXPECT_EQ(store, before);

  ModelGraph ok = build(tiny_config(), Topology::kDirect);
  ParamStore s2 = init_store(ok, 1);
  TransplantScheme twice;
  twice.grafts = {{GraftKind::kMtDec, p.mt_params}, {GraftKind::kAsrDecToSt, p.asr_params}};
  EXPECT_THROW(apply_transplant(ok, s2, twice), TransplantError);
  TransplantScheme missing;
  missing.grafts = {{GraftKind::kAsrDec, p.asr_params}};
  EXPECT_THROW(apply_transplant(ok, s2, missing), TransplantError);
  TransplantScheme wrong_source;
  wrong_source.grafts = {{GraftKind::kAsrEnc, p.mt_params}};
  EXPECT_THROW(apply_transplant(ok, s2, wrong_source), TransplantError);
}

TEST(Transplant, AsrDecoderIntoTranslationDecoder) {
  Pretrained p = pretrained();
  ModelConfig c = tiny_config();
  c.target_vocab = 10;
  ModelGraph graph = build(c, Topology::kDirect);
  ParamStore store = init_store(graph, 1);
  const ParamStore fresh = store;
  TransplantScheme s;
  s.grafts = {{GraftKind::kAsrDecToSt, p.asr_params}};
  TransplantReport r = apply_transplant(graph, store, s);
  EXPECT_EQ(store.at("decoder_st.embed"), fresh.at("decoder_st.embed"));
  EXPECT_EQ(store.at("decoder_st.lstm1.w_hh"), p.asr_params.at("decoder_asr.lstm1.w_hh"));
  EXPECT_EQ(store.at("decoder_st.att.v"), p.asr_params.at("decoder_asr.att.v"));
  EXPECT_EQ(r.reinitialized.size(), 3u);

  c.target_vocab = c.source_vocab;
  ModelGraph same = build(c, Topology::kDirect);
  ParamStore s2 = init_store(same, 1);
  r = apply_transplant(same, s2, s);
  EXPECT_TRUE(r.reinitialized.empty());
  EXPECT_EQ(s2.at("decoder_st.embed"), p.asr_params.at("decoder_asr.embed"));
}

TEST(Transplant, TiedTopologiesTakeBothAsrComponents) {
  Pretrained p = pretrained();
  ModelGraph graph = build(tiny_config(), Topology::kTiedTriangle);
  ParamStore store = init_store(graph, 1);
  TransplantScheme s;
  s.grafts = {{GraftKind::kAsrEnc, p.asr_params}, {GraftKind::kAsrDec, p.asr_params}};
  apply_transplant(graph, store, s);
  for (const auto& name : p.asr_params.names()) EXPECT_EQ(store.at(name), p.asr_params.at(name)) << name;
  // The translation decoder of a tied model attends over decoder states, so
  // a plain text-model decoder does not fit.
  TransplantScheme mt;
  mt.grafts = {{GraftKind::kMtDec, p.mt_params}};
  EXPECT_THROW(apply_transplant(graph, store, mt), TransplantError);
}

}  // namespace
}  // namespace e2est
