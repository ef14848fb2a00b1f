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

#include <cstring>

namespace pclprompt {
namespace {

using testkit::Matrix;

Tensor<double> random_tokens(std::size_t rows, std::size_t cols, Rng& rng) {
  std::vector<double> v(rows * cols);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& x : v) x = n(rng);
  return Tensor<double>::from_vector({rows, cols}, std::move(v));
}

// Mini-PointNet embedding rebuilt point by point.
Matrix patch_embedding_ref(const PatchSet& ps, Backbone<double>& bb) {
  Matrix out;
  for (std::size_t i = 0; i < ps.m; ++i) {
    Matrix pts;
    for (std::size_t j = 0; j < ps.k; ++j) {
      pts.push_back({ps.groups[(i * ps.k + j) * 3], ps.groups[(i * ps.k + j) * 3 + 1],
                     ps.groups[(i * ps.k + j) * 3 + 2]});
    }
    auto h1 = testkit::linear_ref(pts, bb.point_mlp());
    for (auto& row : h1) {
      for (auto& v : row) v = testkit::gelu_ref(v);
    }
    std::vector<double> pooled(h1.front().size(), -1e300);
    for (const auto& row : h1) {
      for (std::size_t c = 0; c < row.size(); ++c) pooled[c] = std::max(pooled[c], row[c]);
    }
    Matrix joined;
    for (const auto& row : h1) {
      auto r = pooled;
      r.insert(r.end(), row.begin(), row.end());
      joined.push_back(r);
    }
    const auto h2 = testkit::linear_ref(joined, bb.patch_mlp());
    std::vector<double> feat(h2.front().size(), -1e300);
    for (const auto& row : h2) {
      for (std::size_t c = 0; c < row.size(); ++c) feat[c] = std::max(feat[c], row[c]);
    }
    Matrix center{{ps.centers[3 * i], ps.centers[3 * i + 1], ps.centers[3 * i + 2]}};
    auto pos = testkit::linear_ref(center, bb.pos_fc1());
    for (auto& v : pos[0]) v = testkit::gelu_ref(v);
    pos = testkit::linear_ref(pos, bb.pos_fc2());
    for (std::size_t c = 0; c < feat.size(); ++c) feat[c] += pos[0][c];
    out.push_back(feat);
  }
  return out;
}

TEST(Backbone, EncoderLayerMatchesStraightLineOracle) {
  Rng rng(21);
  for (std::size_t heads : {1u, 2u, 4u}) {
    for (int trial = 0; trial < 10; ++trial) {
      auto layer = EncoderLayer<double>::init(8, heads, 2, rng);
      // non-trivial affine norms
      for (auto& v : layer.norm1.weight.data()) v = 1.0 + 0.3 * std::normal_distribution<double>()(rng);
      for (auto& v : layer.norm2.bias.data()) v = 0.2 * std::normal_distribution<double>()(rng);
      const auto x = random_tokens(5 + trial % 4, 8, rng);
      const auto got = testkit::to_matrix(layer(x));
      EXPECT_LT(testkit::max_abs_diff(got, testkit::encoder_layer_ref(testkit::to_matrix(x), layer)), 1e-12);
    }
  }
}

TEST(Backbone, EmbeddingMatchesPointwiseOracle) {
  Rng rng(22);
  BackboneConfig cfg = testkit::grad_check_config();
  Backbone<double> bb(cfg, rng);
  for (int trial = 0; trial < 5; ++trial) {
    const auto ps = bb.group(testkit::random_cloud(40, rng));
    const auto seq = bb.embed_patches(ps);
    ASSERT_EQ(seq.length(), 1 + cfg.patches);
    EXPECT_EQ(seq.roles[0], Role::Cls);
    const auto tokens = testkit::to_matrix(seq.tokens);
    EXPECT_LT(testkit::max_abs_diff(Matrix(tokens.begin() + 1, tokens.end()), patch_embedding_ref(ps, bb)), 1e-12);
    EXPECT_EQ(0, std::memcmp(seq.tokens.value().data(), bb.cls_token().value().data(), cfg.width * sizeof(double)));
  }
}

TEST(Backbone, ForwardPlainIsEmbeddingThroughEveryLayer) {
  Rng rng(23);
  const auto cfg = testkit::grad_check_config();
  Backbone<double> bb(cfg, rng);
  const auto cloud = testkit::random_cloud(48, rng);
  const auto out = bb.forward_plain(cloud);
  EXPECT_EQ(out.layer_index, cfg.depth);
  EXPECT_EQ(out.length(), 1 + cfg.patches);
  EXPECT_EQ(out.prompt_count(), 0u);
  Matrix x = testkit::to_matrix(bb.embed_patches(bb.group(cloud)).tokens);
  for (std::size_t i = 1; i <= cfg.depth; ++i) x = testkit::encoder_layer_ref(x, bb.layer(i));
  EXPECT_LT(testkit::max_abs_diff(testkit::to_matrix(out.tokens), x), 1e-11);
}

TEST(Backbone, EncodeRunsPartialRanges) {
  Rng rng(24);
  const auto cfg = testkit::grad_check_config();
  Backbone<double> bb(cfg, rng);
  const auto seq = bb.embed_patches(bb.group(testkit::random_cloud(48, rng)));
  const auto half = bb.encode(seq, 1);
  EXPECT_EQ(half.layer_index, 1u);
  const auto full = bb.encode(half, 2);
  const auto direct = bb.encode(seq, 2);
  EXPECT_EQ(0, std::memcmp(full.tokens.value().data(), direct.tokens.value().data(),
                           direct.tokens.numel() * sizeof(double)));
  EXPECT_THROW(bb.encode(full, 1), std::invalid_argument);
  EXPECT_THROW(bb.encode(seq, 3), std::invalid_argument);
}

TEST(Backbone, CloneIsDeep) {
  Rng rng(25);
  Backbone<double> bb(testkit::grad_check_config(), rng);
  auto copy = bb.clone();
  copy.cls_token().data()[0] += 1.0;
  copy.mutable_layer(1).qkv.weight.data()[0] += 1.0;
  EXPECT_NE(copy.cls_token().value()[0], bb.cls_token().value()[0]);
  EXPECT_NE(copy.layer(1).qkv.weight.value()[0], bb.layer(1).qkv.weight.value()[0]);
}

TEST(Backbone, ParameterNamesAreStable) {
  Rng rng(26);
  Backbone<float> bb(BackboneConfig::toy(), rng);
  ParamStore<float> store;
  bb.register_params(store);
  for (const char* name : {"backbone.embed.fc1.weight", "backbone.embed.fc2.bias", "backbone.pos.fc1.weight",
                           "backbone.pos.fc2.bias", "backbone.cls", "backbone.layer1.norm1.weight",
                           "backbone.layer3.attn.qkv.weight", "backbone.layer3.attn.proj.bias",
                           "backbone.layer4.norm2.bias", "backbone.layer4.mlp.fc1.weight",
                           "backbone.layer2.mlp.fc2.bias"}) {
    EXPECT_TRUE(store.contains(name)) << name;
  }
  EXPECT_FALSE(store.contains("backbone.layer5.norm1.weight"));
}

TEST(Backbone, ConfigValidation) {
  BackboneConfig ok;
  EXPECT_NO_THROW(ok.validate());
  auto bad = ok;
  bad.heads = 3;  // 64 % 3 != 0
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = ok;
  bad.width = 7;  // odd width cannot halve for the point MLP
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = ok;
  bad.depth = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  Rng rng(27);
  Backbone<double> bb(testkit::grad_check_config(), rng);
  PointCloud tiny = testkit::random_cloud(4, rng);
  EXPECT_THROW(bb.forward_plain(tiny), std::invalid_argument);
}

class HeadComposition : public ::testing::TestWithParam<std::string> {};

TEST_P(HeadComposition, MatchesReference) {
  Rng rng(28);
  const auto inputs = parse_head_inputs(GetParam());
  EXPECT_EQ(parse_head_inputs(render_head_inputs(inputs)), inputs);
  for (std::size_t prompts : {1u, 3u}) {
    const auto head = ClassifierHead<double>::init(inputs, 8, HeadConfig{6, 5}, rng);
    TokenSequence<double> seq;
    const std::size_t m = 6;
    seq.tokens = random_tokens(1 + prompts + m, 8, rng);
    seq.roles.assign(1 + prompts + m, Role::Patch);
    seq.roles[0] = Role::Cls;
    for (std::size_t p = 0; p < prompts; ++p) seq.roles[1 + p] = Role::Prompt;
    EXPECT_EQ(head.features(seq).dim(1), 8 * inputs.count());
    const auto logits = head(seq);
    ASSERT_EQ(logits.shape(), ad::Shape{5});
    EXPECT_LT(testkit::max_abs_diff(testkit::head_ref(testkit::to_matrix(seq.tokens), prompts, head),
                                    logits.value()),
              1e-12);
  }
}

// The four Fig. 7 compositions.
INSTANTIATE_TEST_SUITE_P(FourCases, HeadComposition,
                         ::testing::Values("cls", "cls,patch_max", "cls,prompt", "cls,prompt,patch_max"),
                         [](const auto& info) {
                           std::string s = info.param;
                           for (auto& c : s) c = c == ',' ? '_' : c;
                           return s;
                         });

TEST(Head, RejectsMissingPromptBlock) {
  Rng rng(29);
  const auto head = ClassifierHead<double>::init(HeadInputs{true, true, false}, 8, HeadConfig{}, rng);
  Backbone<double> bb(testkit::grad_check_config(), rng);
  EXPECT_THROW(head(bb.forward_plain(testkit::random_cloud(48, rng))), std::invalid_argument);
  EXPECT_THROW(parse_head_inputs("cls,bogus"), std::invalid_argument);
  EXPECT_THROW(ClassifierHead<double>::init(HeadInputs{false, false, false}, 8, HeadConfig{}, rng),
               std::invalid_argument);
}

TEST(Head, WidthArithmetic) {
  Rng rng(30);
  const auto cls_only = ClassifierHead<double>::init(HeadInputs{true, false, false}, 384, HeadConfig{256, 15}, rng);
  EXPECT_EQ(cls_only.fc1.in_features(), 384u);
  const auto all = ClassifierHead<double>::init(HeadInputs{true, true, true}, 384, HeadConfig{256, 15}, rng);
  EXPECT_EQ(all.fc1.in_features(), 3u * 384);
  EXPECT_EQ(all.fc3.out_features(), 15u);
}

}  // namespace
}  // namespace pclprompt
