// Copyright (c) 2026 The pclprompt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "testkit.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <numeric>
#include <set>

namespace pclprompt {
namespace {

using testkit::Matrix;

Tensor<double> random_rows(std::size_t rows, std::size_t cols, Rng& rng) {
  std::vector<double> v(rows * cols);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& x : v) x = n(rng);
  return Tensor<double>::from_vector({rows, cols}, std::move(v));
}

bool bitwise_equal(const Tensor<double>& a, const Tensor<double>& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.value().data(), b.value().data(), a.numel() * sizeof(double)) == 0;
}

StrategyConfig strategy_of(StrategyKind kind) {
  StrategyConfig s;
  s.kind = kind;
  return s;
}

TEST(EdgeConv, MatchesPerEdgeOracle) {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 3 + trial % 8;
    const std::size_t d = 2 + trial % 5;
    const std::size_t k = 1 + trial % m;
    const auto conv = EdgeConvLayer<double>::init(d, 2 + trial % 4, rng);
    const auto x = random_rows(m, d, rng);
    const auto got = testkit::to_matrix(conv(x, k));
    EXPECT_LT(testkit::max_abs_diff(got, testkit::edgeconv_ref(testkit::to_matrix(x), conv.edge, k)), 1e-12)
        << "trial " << trial;
  }
  const auto conv = EdgeConvLayer<double>::init(4, 4, rng);
  EXPECT_THROW(conv(random_rows(3, 4, rng), 4), std::invalid_argument);
}

class GeneratorKinds : public ::testing::TestWithParam<GeneratorKind> {};

TEST_P(GeneratorKinds, MatchesReferenceAndIgnoresPatchOrder) {
  Rng rng(32);
  const auto cfg = testkit::grad_check_config();
  for (std::size_t knn_k : {3u, 6u}) {
    const auto gen = PromptGenerator<double>::init(GetParam(), cfg, knn_k, rng);
    const auto x = random_rows(cfg.patches, cfg.width, rng);
    const auto prompt = gen.generate(x, 1);
    ASSERT_EQ(prompt.shape(), (ad::Shape{1, cfg.width}));
    EXPECT_LT(testkit::max_abs_diff(testkit::generator_ref(testkit::to_matrix(x), gen), prompt.value()), 1e-12);

    std::vector<std::size_t> perm(cfg.patches);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto permuted = gen.generate(ad::gather(x, perm), 1);
    const std::vector<double> a(prompt.value().begin(), prompt.value().end());
    EXPECT_LT(testkit::max_abs_diff(a, permuted.value()), 1e-12);

    const auto top3 = gen.generate(x, 3);
    EXPECT_EQ(top3.shape(), (ad::Shape{3, cfg.width}));
    EXPECT_EQ(0, std::memcmp(top3.value().data(), prompt.value().data(), cfg.width * sizeof(double)));
  }
}

INSTANTIATE_TEST_SUITE_P(AllKinds, GeneratorKinds,
                         ::testing::Values(GeneratorKind::Mlp1, GeneratorKind::Mlp3, GeneratorKind::EdgeConv1,
                                           GeneratorKind::EdgeConv2, GeneratorKind::EdgeConv3,
                                           GeneratorKind::Transformer1),
                         [](const auto& info) { return std::string(generator_name(info.param)); });

TEST(PromptModule, IdptMatchesReferenceReimplementation) {
  for (std::size_t depth : {2u, 4u}) {
    Rng rng(33 + depth);
    auto cfg = testkit::grad_check_config();
    cfg.depth = depth;
    Backbone<double> bb(cfg, rng);
    const auto model = TunedModel<double>::create(bb, strategy_of(StrategyKind::Idpt), HeadConfig{0, 4}, 7);
    for (int trial = 0; trial < 5; ++trial) {
      const auto cloud = testkit::random_cloud(48, rng);
      const auto out = model.forward(cloud);
      ASSERT_EQ(out.length(), 2 + cfg.patches);
      EXPECT_EQ(out.roles[1], Role::Prompt);
      const auto embedded = testkit::to_matrix(model.backbone.embed_patches(model.backbone.group(cloud)).tokens);
      const auto ref = testkit::idpt_ref(embedded, model.backbone, model.prompts.generator_for(depth));
      EXPECT_LT(testkit::max_abs_diff(testkit::to_matrix(out.tokens), ref), 1e-11);
    }
  }
}

TEST(PromptModule, HeadOnlyForwardIsForwardPlainBitwise) {
  Rng rng(35);
  Backbone<double> bb(testkit::grad_check_config(), rng);
  for (auto kind : {StrategyKind::HeadOnly, StrategyKind::FullFinetune}) {
    const auto model = TunedModel<double>::create(bb, strategy_of(kind), HeadConfig{0, 4}, 1);
    for (int trial = 0; trial < 5; ++trial) {
      const auto cloud = testkit::random_cloud(48, rng);
      EXPECT_TRUE(bitwise_equal(model.forward(cloud).tokens, bb.forward_plain(cloud).tokens));
    }
  }
}

TEST(PromptModule, OutputLengthIsOnePlusPromptsPlusPatches) {
  Rng rng(36);
  auto cfg = testkit::grad_check_config();
  cfg.depth = 3;
  Backbone<double> bb(cfg, rng);
  const auto cloud = testkit::random_cloud(48, rng);
  struct Case {
    StrategyKind kind;
    std::size_t prompts, top_k, expect;
  };
  for (const auto& c : {Case{StrategyKind::HeadOnly, 10, 1, 0}, Case{StrategyKind::VptShallow, 2, 1, 2},
                        Case{StrategyKind::VptDeep, 4, 1, 4}, Case{StrategyKind::Idpt, 10, 1, 1},
                        Case{StrategyKind::Idpt, 10, 4, 4}}) {
    auto s = strategy_of(c.kind);
    s.prompt_count = c.prompts;
    s.top_k = c.top_k;
    const auto out = TunedModel<double>::create(bb, s, HeadConfig{0, 4}, 1).forward(cloud);
    EXPECT_EQ(out.length(), 1 + c.expect + cfg.patches) << strategy_name(c.kind);
    EXPECT_EQ(out.prompt_count(), c.expect);
  }
}

TEST(PromptModule, VptDeepReplacesPromptsAtEveryLayer) {
  Rng rng(37);
  auto cfg = testkit::grad_check_config();
  cfg.depth = 3;
  Backbone<double> bb(cfg, rng);
  auto s = strategy_of(StrategyKind::VptDeep);
  s.prompt_count = 2;
  const auto model = TunedModel<double>::create(bb, s, HeadConfig{0, 4}, 3);
  ASSERT_EQ(model.prompts.static_prompts().size(), 3u);
  const auto cloud = testkit::random_cloud(48, rng);
  auto seq = bb.embed_patches(bb.group(cloud));
  for (std::size_t i = 1; i <= 3; ++i) {
    seq = seq.with_prompts(model.prompts.static_prompts().at(i));
    seq.tokens = bb.layer(i)(seq.tokens);
  }
  EXPECT_TRUE(bitwise_equal(model.forward(cloud).tokens, seq.tokens));
}

TEST(PromptModule, TopKOnePathEqualsDefaultBitwise) {
  Rng rng(38);
  Backbone<double> bb(testkit::grad_check_config(), rng);
  const auto model = TunedModel<double>::create(bb, strategy_of(StrategyKind::Idpt), HeadConfig{0, 4}, 5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto cloud = testkit::random_cloud(48, rng);
    EXPECT_TRUE(bitwise_equal(model.logits(cloud), testkit::logits_via_topk(model, cloud)));
  }
}

TEST(PromptModule, SharedAndIndependentGenerators) {
  Rng rng(39);
  auto cfg = testkit::grad_check_config();
  cfg.depth = 4;
  Backbone<double> bb(cfg, rng);
  auto s = strategy_of(StrategyKind::Idpt);
  s.insert_layers = {2, 3, 4};
  const auto shared = TunedModel<double>::create(bb, s, HeadConfig{0, 4}, 1);
  EXPECT_EQ(shared.prompts.generators().size(), 1u);
  EXPECT_EQ(shared.prompts.first_active_layer(), 2u);
  EXPECT_EQ(shared.frozen_prefix(), 1u);
  s.sharing = Sharing::Independent;
  const auto independent = TunedModel<double>::create(bb, s, HeadConfig{0, 4}, 1);
  EXPECT_EQ(independent.prompts.generators().size(), 3u);
  ParamStore<double> store;
  independent.prompts.register_params(store);
  EXPECT_TRUE(store.contains("generator.layer3.edgeconv2.weight"));
  const auto out = independent.forward(testkit::random_cloud(48, rng));
  EXPECT_EQ(out.prompt_count(), 1u);
}

TEST(PromptModule, GradientsReachTunablesOnly) {
  Rng rng(40);
  Backbone<double> bb(testkit::grad_check_config(), rng);
  for (auto kind : {StrategyKind::HeadOnly, StrategyKind::VptShallow, StrategyKind::VptDeep, StrategyKind::Idpt}) {
    const auto model = TunedModel<double>::create(bb, strategy_of(kind), HeadConfig{0, 4}, 2);
    ParamStore<double> store;
    model.register_params(store);
    backward(ad::cross_entropy_with_logits(model.logits(testkit::random_cloud(48, rng)), 1));
    for (const auto& e : store.entries()) {
      const bool trainable = e.group != ParamGroup::Backbone;
      EXPECT_EQ(e.tensor.requires_grad(), trainable) << e.name;
      double norm = 0;
      if (e.tensor.has_grad()) {
        for (double g : e.tensor.grad()) norm += g * g;
      }
      if (trainable) {
        EXPECT_GT(norm, 0.0) << strategy_name(kind) << " " << e.name;
      } else {
        EXPECT_EQ(norm, 0.0) << strategy_name(kind) << " " << e.name;
      }
    }
  }
}

TEST(Strategy, ResolvedDefaults) {
  const auto cfg = BackboneConfig::toy();
  EXPECT_EQ(strategy_of(StrategyKind::Idpt).resolved(cfg).insert_layers, std::vector<std::size_t>{cfg.depth});
  EXPECT_EQ(strategy_of(StrategyKind::VptShallow).resolved(cfg).insert_layers, std::vector<std::size_t>{1});
  EXPECT_EQ(strategy_of(StrategyKind::VptDeep).resolved(cfg).insert_layers.size(), cfg.depth);
  EXPECT_EQ(strategy_of(StrategyKind::Idpt).resolved(cfg).knn_k, 8u);
  auto small = cfg;
  small.patches = 5;
  EXPECT_EQ(strategy_of(StrategyKind::Idpt).resolved(small).knn_k, 5u);
  EXPECT_EQ(*strategy_of(StrategyKind::Idpt).resolved(cfg).head_inputs, (HeadInputs{true, true, true}));
  EXPECT_EQ(*strategy_of(StrategyKind::VptDeep).resolved(cfg).head_inputs, (HeadInputs{true, false, true}));
}

TEST(Strategy, ValidationCatchesInconsistencies) {
  const auto cfg = BackboneConfig::toy();
  auto s = strategy_of(StrategyKind::Idpt);
  s.insert_layers = {1};
  EXPECT_FALSE(s.problems(cfg).empty());
  EXPECT_THROW(s.validate(cfg), std::invalid_argument);
  s.insert_layers = {cfg.depth + 1};
  EXPECT_FALSE(s.problems(cfg).empty());
  s.insert_layers = {2, 3, 4};
  EXPECT_TRUE(s.problems(cfg).empty());
  s.top_k = cfg.patches + 1;
  EXPECT_FALSE(s.problems(cfg).empty());

  auto head_only = strategy_of(StrategyKind::HeadOnly);
  head_only.head_inputs = HeadInputs{true, true, false};
  EXPECT_FALSE(head_only.problems(cfg).empty());
  head_only.head_inputs.reset();
  head_only.insert_layers = {2};
  EXPECT_FALSE(head_only.problems(cfg).empty());

  auto shallow = strategy_of(StrategyKind::VptShallow);
  shallow.insert_layers = {1, 2};
  EXPECT_FALSE(shallow.problems(cfg).empty());
  shallow.insert_layers = {3};
  EXPECT_TRUE(shallow.problems(cfg).empty());
}

TEST(Strategy, NameRoundTrips) {
  for (auto k : {StrategyKind::FullFinetune, StrategyKind::HeadOnly, StrategyKind::VptShallow,
                 StrategyKind::VptDeep, StrategyKind::Idpt}) {
    EXPECT_EQ(parse_strategy_kind(strategy_name(k)), k);
  }
  for (auto g : {GeneratorKind::Mlp1, GeneratorKind::Mlp3, GeneratorKind::EdgeConv1, GeneratorKind::EdgeConv2,
                 GeneratorKind::EdgeConv3, GeneratorKind::Transformer1}) {
    EXPECT_EQ(parse_generator_kind(generator_name(g)), g);
  }
  EXPECT_THROW(parse_strategy_kind("prefix"), std::invalid_argument);
}

// ---- parameter accounting ----

constexpr std::size_t kD = 384, kHidden = 256, kClasses = 15, kDepth = 12;

std::size_t linear(std::size_t in, std::size_t out) { return in * out + out; }
std::size_t encoder_layer(std::size_t d, std::size_t ffn) {
  return 2 * 2 * d + linear(d, 3 * d) + linear(d, d) + linear(d, ffn * d) + linear(ffn * d, d);
}
std::size_t head(std::size_t inputs) {
  return linear(inputs * kD, kHidden) + linear(kHidden, kHidden) + linear(kHidden, kClasses);
}
std::size_t backbone_params() {
  return linear(3, kD / 2) + linear(kD, kD) + linear(3, kD) + linear(kD, kD) + kD +
         kDepth * encoder_layer(kD, 4);
}

ParamBreakdown paper_count(StrategyKind kind, GeneratorKind gen = GeneratorKind::EdgeConv3) {
  auto s = strategy_of(kind);
  s.generator = gen;
  return count_trainable(s, BackboneConfig::paper_scale(), HeadConfig{kHidden, kClasses});
}

TEST(ParamCount, ClosedFormAtPaperScale) {
  const auto full = paper_count(StrategyKind::FullFinetune);
  EXPECT_EQ(full.backbone, backbone_params());
  EXPECT_EQ(full.head, head(2));
  EXPECT_EQ(full.ratio, 1.0);

  const auto ho = paper_count(StrategyKind::HeadOnly);
  EXPECT_EQ(ho.total_trainable, head(2));
  EXPECT_EQ(ho.backbone, 0u);
  EXPECT_EQ(ho.backbone_all, backbone_params());

  EXPECT_EQ(paper_count(StrategyKind::VptShallow).prompts, 10 * kD);
  EXPECT_EQ(paper_count(StrategyKind::VptDeep).prompts, 10 * kD * kDepth);

  const auto idpt = paper_count(StrategyKind::Idpt);
  EXPECT_EQ(idpt.generator, 3 * linear(2 * kD, kD) + linear(3 * kD, kD));
  EXPECT_EQ(idpt.head, head(3));
  EXPECT_EQ(idpt.total_trainable, idpt.generator + idpt.head);
  EXPECT_EQ(idpt.total_all, backbone_params() + head(3));
  EXPECT_DOUBLE_EQ(idpt.ratio, double(idpt.total_trainable) / double(idpt.total_all));

  EXPECT_EQ(paper_count(StrategyKind::Idpt, GeneratorKind::Mlp1).generator, linear(kD, kD));
  EXPECT_EQ(paper_count(StrategyKind::Idpt, GeneratorKind::Mlp3).generator, 3 * linear(kD, kD));
  EXPECT_EQ(paper_count(StrategyKind::Idpt, GeneratorKind::Transformer1).generator, encoder_layer(kD, 4));
}

// Trainable-parameter column of the generator-structure table, in millions.
TEST(ParamCount, MatchesPublishedGeneratorRows) {
  struct Row {
    StrategyKind kind;
    GeneratorKind gen;
    double millions;
  };
  for (const auto& r : {Row{StrategyKind::HeadOnly, GeneratorKind::EdgeConv3, 0.27},
                        Row{StrategyKind::Idpt, GeneratorKind::Mlp1, 0.52},
                        Row{StrategyKind::Idpt, GeneratorKind::EdgeConv1, 0.81},
                        Row{StrategyKind::Idpt, GeneratorKind::EdgeConv2, 1.25},
                        Row{StrategyKind::Idpt, GeneratorKind::EdgeConv3, 1.70},
                        Row{StrategyKind::Idpt, GeneratorKind::Transformer1, 2.14}}) {
    const double got = paper_count(r.kind, r.gen).total_trainable / 1e6;
    EXPECT_NEAR(got, r.millions, 0.05 * r.millions) << generator_name(r.gen);
  }
}

TEST(ParamCount, TotalAllIsStrategyIndependentForAFixedHead) {
  const auto cfg = BackboneConfig::toy();
  for (const auto inputs : {HeadInputs{true, false, true}, HeadInputs{true, false, false}}) {
    std::set<std::size_t> totals;
    for (auto kind : {StrategyKind::FullFinetune, StrategyKind::HeadOnly, StrategyKind::VptShallow,
                      StrategyKind::VptDeep, StrategyKind::Idpt}) {
      auto s = strategy_of(kind);
      s.head_inputs = inputs;
      totals.insert(count_trainable(s, cfg, HeadConfig{}).total_all);
    }
    EXPECT_EQ(totals.size(), 1u);
  }
}

TEST(ParamCount, RegistryOfBuiltModelAgrees) {
  Rng rng(41);
  const auto cfg = BackboneConfig::toy();
  Backbone<float> bb(cfg, rng);
  for (auto kind : {StrategyKind::FullFinetune, StrategyKind::HeadOnly, StrategyKind::VptShallow,
                    StrategyKind::VptDeep, StrategyKind::Idpt}) {
    const auto model = TunedModel<float>::create(bb, strategy_of(kind), HeadConfig{}, 3);
    ParamStore<float> store;
    model.register_params(store);
    const auto a = count_registry(store);
    const auto b = count_trainable(strategy_of(kind), cfg, HeadConfig{});
    EXPECT_EQ(a.total_trainable, b.total_trainable) << strategy_name(kind);
    EXPECT_EQ(a.total_all, b.total_all) << strategy_name(kind);
  }
}

}  // namespace
}  // namespace pclprompt
