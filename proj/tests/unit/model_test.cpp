// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "e2est/errors.hpp"
#include "e2est/grad_check.hpp"
#include "e2est/model.hpp"
#include "test_util.hpp"

namespace e2est {
namespace {

using testing::tiny_batch;
using testing::tiny_config;
using testing::tiny_generation;

const Topology kSpeechTopologies[] = {Topology::kDirect, Topology::kAsr, Topology::kOne2Many, Topology::kMany2One,
                                      Topology::kTiedCascade, Topology::kTiedTriangle};

double loss_of(const ModelGraph& graph, const ParamStore& store, const Batch& b, ForwardOptions o = {}) {
  Graph g(false);
  return g.value(forward(g, graph, store, b, o).objective).item();
}

GradMap grads_of(const ModelGraph& graph, const ParamStore& store, const Batch& b, ForwardOptions o = {}) {
  Graph g;
  return g.backward(forward(g, graph, store, b, o).objective, store);
}

ParamStore zeroed(ParamStore store) {
  for (auto& [name, t] : store) t.fill(0.0);
  return store;
}

TEST(Topology, NamesRoundTrip) {
  for (Topology t : {Topology::kDirect, Topology::kAsr, Topology::kMt, Topology::kOne2Many, Topology::kMany2One,
                     Topology::kTiedCascade, Topology::kTiedTriangle}) {
    EXPECT_EQ(parse_topology(topology_name(t)), t);
  }
  EXPECT_THROW(parse_topology("cascade"), ConfigError);
}

TEST(ModelGraph, ComponentPrefixes) {
  ModelConfig c = tiny_config();
  c.ctc = true;
  using V = std::vector<std::string>;
  EXPECT_EQ(build(c, Topology::kDirect).prefixes(), (V{"encoder", "ctc_head", "decoder_st"}));
  EXPECT_EQ(build(c, Topology::kAsr).prefixes(), (V{"encoder", "ctc_head", "decoder_asr"}));
  EXPECT_EQ(build(c, Topology::kMt).prefixes(), (V{"text_encoder", "decoder_st"}));
  EXPECT_EQ(build(c, Topology::kOne2Many).prefixes(), (V{"encoder", "ctc_head", "decoder_asr", "decoder_st"}));
  EXPECT_EQ(build(c, Topology::kMany2One).prefixes(), (V{"encoder", "text_encoder", "ctc_head", "decoder_st"}));
  EXPECT_EQ(build(c, Topology::kTiedTriangle).prefixes(), (V{"encoder", "ctc_head", "decoder_asr", "decoder_st"}));
  c.ctc = false;
  EXPECT_EQ(build(c, Topology::kTiedCascade).prefixes(), (V{"encoder", "decoder_asr", "decoder_st"}));
}

TEST(ModelGraph, PoolSchedule) {
  using V = std::vector<std::size_t>;
  EXPECT_EQ(pool_schedule(3, 3), (V{1, 1, 1}));
  EXPECT_EQ(pool_schedule(1, 3), (V{3}));
  EXPECT_EQ(pool_schedule(2, 3), (V{1, 2}));
  EXPECT_EQ(pool_schedule(4, 2), (V{1, 1, 0, 0}));
}

TEST(ModelGraph, SerializeRoundTrip) {
  ModelConfig c = tiny_config();
  c.ctc = true;
  c.lambda = 0.3;
  ModelGraph g = build(c, Topology::kTiedTriangle, 1);
  ParamStore s = init_store(g, 1);
  g = insert_adapter(g, s, AdapterPosition::kAsrDecoderTop);
  EXPECT_EQ(deserialize_graph(serialize_graph(g)), g);
}

TEST(ModelConfig, ValidationRejectsBadValues) {
  ModelConfig c = tiny_config();
  c.lambda = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  EXPECT_THROW(build(c, Topology::kDirect, 3), ConfigError);
}

TEST(ParamStore, InitIsPerNameAndSeeded) {
  ModelConfig c = tiny_config();
  ParamStore direct = init_store(build(c, Topology::kDirect), 5);
  ParamStore tri = init_store(build(c, Topology::kTiedTriangle), 5);
  for (const auto& [name, t] : direct) {
    if (tri.contains(name) && tri.at(name).shape() == t.shape()) EXPECT_EQ(tri.at(name), t) << name;
  }
  EXPECT_NE(init_store(build(c, Topology::kDirect), 6).at("encoder.blstm1.fw.w_ih"), direct.at("encoder.blstm1.fw.w_ih"));
  EXPECT_EQ(max_abs_diff(direct.at("decoder_st.out.b"), Tensor(direct.at("decoder_st.out.b").shape())), 0.0);
  check_store(build(c, Topology::kDirect), direct);
  EXPECT_THROW(check_store(build(c, Topology::kOne2Many), direct), ShapeError);
}

TEST(Forward, ZeroParametersGiveUniformLoss) {
  Dataset ds = generate(tiny_generation());
  Batch b = tiny_batch(ds, 0, 4);
  ModelConfig c = tiny_config();
  const double log_v = std::log(static_cast<double>(c.target_vocab - 1));
  double steps = 0;
  for (const auto& e : b.translations) steps += static_cast<double>(e.size() + 1);
  ModelGraph direct = build(c, Topology::kDirect);
  EXPECT_NEAR(loss_of(direct, zeroed(init_store(direct, 1)), b), steps * log_v, 1e-9);
  ModelGraph mt = build(c, Topology::kMt);
  EXPECT_NEAR(loss_of(mt, zeroed(init_store(mt, 1)), b), steps * log_v, 1e-9);
  ModelGraph tri = build(c, Topology::kTiedTriangle);
  double src_steps = 0;
  for (const auto& f : b.transcripts) src_steps += static_cast<double>(f.size() + 1);
  const double want = c.lambda * steps * log_v + (1 - c.lambda) * src_steps * std::log(double(c.source_vocab - 1));
  EXPECT_NEAR(loss_of(tri, zeroed(init_store(tri, 1)), b), want, 1e-9);
}

TEST(Forward, LossCombinationMatchesParts) {
  Dataset ds = generate(tiny_generation());
  Batch b = tiny_batch(ds, 0, 3);
  for (bool ctc : {false, true}) {
    ModelConfig c = tiny_config();
    c.ctc = ctc;
    c.lambda = 0.3;
    for (Topology t : kSpeechTopologies) {
      ModelGraph graph = build(c, t);
      ParamStore s = init_store(graph, 2);
      Graph g(false);
      ForwardResult r = forward(g, graph, s, b);
      const auto& p = r.parts;
      EXPECT_EQ(p.ctc != 0.0, ctc) << topology_name(t);
      double want = 0;
      switch (t) {
        case Topology::kDirect: want = p.st + p.ctc; break;
        case Topology::kAsr: want = p.asr + p.ctc; break;
        case Topology::kMany2One: want = 0.3 * (p.st + p.ctc); break;
        default: want = 0.3 * p.st + 0.7 * (p.asr + p.ctc); break;
      }
      EXPECT_NEAR(p.combined, want, 1e-12 * std::abs(want)) << topology_name(t) << " ctc " << ctc;
    }
  }
}

TEST(Forward, One2ManyWithFullWeightTrainsLikeDirect) {
  Dataset ds = generate(tiny_generation());
  Batch b = tiny_batch(ds, 1, 4);
  ModelConfig c = tiny_config();
  c.lambda = 1.0;
  ModelGraph direct = build(c, Topology::kDirect), o2m = build(c, Topology::kOne2Many);
  ParamStore sd = init_store(direct, 7), so = init_store(o2m, 7);
  EXPECT_NEAR(loss_of(direct, sd, b), loss_of(o2m, so, b), 1e-12);
  GradMap gd = grads_of(direct, sd, b), go = grads_of(o2m, so, b);
  for (const auto& [name, t] : gd) {
    ASSERT_TRUE(go.count(name)) << name;
    EXPECT_LT(max_abs_diff(t, go.at(name)), 1e-12) << name;
  }
  for (const auto& [name, t] : go) {
    if (component_of(name) == "decoder_asr") EXPECT_EQ(max_abs_diff(t, Tensor(t.shape())), 0.0) << name;
  }
}

TEST(Forward, Many2OneSpeechModeIsScaledDirect) {
  Dataset ds = generate(tiny_generation());
  Batch b = tiny_batch(ds, 0, 5);
  for (bool ctc : {false, true}) {
    ModelConfig c = tiny_config();
    c.ctc = ctc;
    ModelGraph direct = build(c, Topology::kDirect), m2o = build(c, Topology::kMany2One);
    ParamStore sd = init_store(direct, 9), sm = init_store(m2o, 9);
    EXPECT_NEAR(c.lambda * loss_of(direct, sd, b), loss_of(m2o, sm, b), 1e-12);
    ForwardOptions text;
    text.mode = Many2OneMode::kText;
    ModelGraph mt = build(c, Topology::kMt);
    ParamStore smt = init_store(mt, 9);
    EXPECT_NEAR((1 - c.lambda) * loss_of(mt, smt, b), loss_of(m2o, sm, b, text), 1e-12);
  }
}

TEST(Forward, BatchedLossEqualsSumOfSingles) {
  Dataset ds = generate(tiny_generation());
  ModelConfig c = tiny_config();
  c.ctc = true;
  for (Topology t : {Topology::kDirect, Topology::kOne2Many, Topology::kTiedTriangle, Topology::kMt}) {
    ModelGraph graph = build(c, t);
    ParamStore s = init_store(graph, 4);
    const double batched = loss_of(graph, s, tiny_batch(ds, 0, 6, 3));
    double singles = 0;
    for (std::size_t i = 0; i < 6; ++i) singles += loss_of(graph, s, tiny_batch(ds, i, 1));
    EXPECT_NEAR(batched, singles, 1e-9) << topology_name(t);
  }
}

TEST(Forward, DropoutOnlyWhenTraining) {
  Dataset ds = generate(tiny_generation());
  Batch b = tiny_batch(ds, 0, 3);
  ModelConfig c = tiny_config();
  c.dropout = 0.3;
  ModelGraph graph = build(c, Topology::kDirect);
  ParamStore s = init_store(graph, 4);
  ForwardOptions train{true, 11};
  const double eval = loss_of(graph, s, b);
  EXPECT_NE(loss_of(graph, s, b, train), eval);
  EXPECT_EQ(loss_of(graph, s, b, train), loss_of(graph, s, b, train));
  c.dropout = 0.0;
  EXPECT_EQ(loss_of(build(c, Topology::kDirect), s, b, train), eval);
}

TEST(Forward, RejectsMismatchedInputs) {
  Dataset ds = generate(tiny_generation());
  Batch b = tiny_batch(ds, 0, 2);
  ModelConfig c = tiny_config();
  ModelGraph graph = build(c, Topology::kOne2Many);
  ParamStore s = init_store(graph, 1);
  Batch missing = b;
  missing.transcripts.pop_back();
  EXPECT_THROW(loss_of(graph, s, missing), DataError);
  Graph g(false);
  EXPECT_THROW(forward_direct(g, graph, s, b), ConfigError);
}

class TopologyGradients : public ::testing::TestWithParam<std::tuple<Topology, bool>> {};

TEST_P(TopologyGradients, MatchFiniteDifferences) {
  const auto [topology, ctc] = GetParam();
  Dataset ds = generate(tiny_generation());
  Batch b = tiny_batch(ds, 0, 2, 1);
  ModelConfig c = tiny_config();
  c.ctc = ctc;
  ModelGraph graph = build(c, topology);
  ParamStore s = init_store(graph, 3);
  if (topology == Topology::kDirect) graph = insert_adapter(graph, s, AdapterPosition::kEncoderTop);
  if (topology == Topology::kTiedCascade) graph = insert_adapter(graph, s, AdapterPosition::kAsrDecoderTop);
  LossFn fn = [&](Graph& g, const ParamStore& st) { return forward(g, graph, st, b).objective; };
  GradCheckReport r = grad_check(fn, s, 1e-6, 6);
  EXPECT_LT(r.max_rel_error, 1e-5) << r.worst_param;
  EXPECT_EQ(r.params.size(), s.size());
}

INSTANTIATE_TEST_SUITE_P(AllTopologies, TopologyGradients,
                         ::testing::Combine(::testing::Values(Topology::kDirect, Topology::kAsr, Topology::kMt,
                                                              Topology::kOne2Many, Topology::kMany2One,
                                                              Topology::kTiedCascade, Topology::kTiedTriangle),
                                            ::testing::Bool()),
                         [](const auto& info) {
                           return std::string(topology_name(std::get<0>(info.param))) +
                                  (std::get<1>(info.param) ? "_ctc" : "_plain");
                         });

TEST(GrowEncoder, KeepsExistingWeights) {
  ModelConfig c = tiny_config();
  c.encoder_layers = 3;
  c.pools = 2;
  ModelGraph g1 = build(c, Topology::kDirect, 1);
  ParamStore s = init_store(g1, 8);
  const ParamStore before = s;
  EXPECT_EQ(g1.pool_schedule(), (std::vector<std::size_t>{2}));
  ModelGraph g2 = grow_encoder(g1, s, 2);
  EXPECT_EQ(g2.pool_schedule(), (std::vector<std::size_t>{1, 1}));
  for (const auto& [name, t] : before) EXPECT_EQ(s.at(name), t) << name;
  EXPECT_EQ(s.at("encoder.blstm2.fw.w_ih").shape(), (Shape{2 * c.encoder_hidden, 4 * c.encoder_hidden}));
  check_store(g2, s);
  EXPECT_THROW(grow_encoder(g2, s, 2), ConfigError);
  EXPECT_THROW(grow_encoder(g2, s, 4), ConfigError);
  // Pooling moves to the new layer, so outputs differ but keep their length.
  Dataset ds = generate(tiny_generation());
  EXPECT_TRUE(std::isfinite(loss_of(g2, s, tiny_batch(ds, 0, 3))));
}

TEST(Adapter, ParameterCountsAndPositions) {
  ModelConfig c = tiny_config();
  const std::size_t H = c.encoder_hidden, D = c.decoder_hidden;
  ModelGraph d = build(c, Topology::kDirect);
  ParamStore s = init_store(d, 1);
  const std::size_t base = s.num_values();
  ModelGraph da = insert_adapter(d, s, AdapterPosition::kEncoderTop);
  EXPECT_EQ(s.num_values() - base, 2 * (2 * H * 4 * H + H * 4 * H + 4 * H));
  EXPECT_THROW(insert_adapter(da, s, AdapterPosition::kEncoderTop), ConfigError);

  ModelGraph t = build(c, Topology::kTiedCascade);
  ParamStore ts = init_store(t, 1);
  const std::size_t tbase = ts.num_values();
  insert_adapter(t, ts, AdapterPosition::kAsrDecoderTop);
  const std::size_t h = D / 2;
  EXPECT_EQ(ts.num_values() - tbase, 2 * (D * 4 * h + h * 4 * h + 4 * h));
  EXPECT_THROW(insert_adapter(t, ts, AdapterPosition::kEncoderTop), ConfigError);
  EXPECT_THROW(insert_adapter(build(c, Topology::kMt), ts, AdapterPosition::kEncoderTop), ConfigError);
}

TEST(Adapter, EncoderTopAdapterFeedsAttentionNotCtc) {
  Dataset ds = generate(tiny_generation());
  Batch b = tiny_batch(ds, 0, 3);
  ModelConfig c = tiny_config();
  c.ctc = true;
  ModelGraph plain = build(c, Topology::kDirect);
  ParamStore s = init_store(plain, 2);
  Graph g0(false);
  const LossBreakdown before = forward(g0, plain, s, b).parts;
  ModelGraph adapted = insert_adapter(plain, s, AdapterPosition::kEncoderTop);
  Graph g1(false);
  const LossBreakdown after = forward(g1, adapted, s, b).parts;
  EXPECT_EQ(after.ctc, before.ctc);
  EXPECT_NE(after.st, before.st);
}

TEST(Tied, IntermediateCapAndSupport) {
  EXPECT_EQ(tied_greedy_cap(1), 2u);
  EXPECT_EQ(tied_greedy_cap(3), 5u);
  EXPECT_EQ(tied_greedy_cap(4), 6u);
  Dataset ds = generate(tiny_generation());
  Batch b = tiny_batch(ds, 0, 3);
  ModelConfig c = tiny_config();
  ModelGraph graph = build(c, Topology::kTiedCascade);
  ParamStore s = init_store(graph, 2);
  Graph g(false);
  auto enc = encode_speech(g, graph, s, b.frames, b.batch, b.frame_lengths, nullptr);
  auto d = bind_decoder(g, s, decoder_spec(graph, DecoderRole::kAsr));
  auto mem = attach_memory(g, d, &enc.top, nullptr);
  std::vector<std::size_t> caps;
  for (const auto& f : b.transcripts) caps.push_back(tied_greedy_cap(f.size()));
  GreedyRun run = greedy_run(g, d, mem, caps, true);
  for (std::size_t i = 0; i < b.batch; ++i) {
    EXPECT_GE(run.states.lengths[i], 1u);
    EXPECT_LE(run.states.lengths[i], caps[i]);
    EXPECT_EQ(run.states.lengths[i], run.tokens[i].size());
  }
  EXPECT_EQ(decoder_spec(graph, DecoderRole::kSt).enc_memory_dim, 0u);
  EXPECT_EQ(decoder_spec(build(c, Topology::kTiedTriangle), DecoderRole::kSt).enc_memory_dim, 2 * c.encoder_hidden);
}

}  // namespace
}  // namespace e2est
