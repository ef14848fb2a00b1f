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

#include "pclprompt/config.hpp"

#include <gtest/gtest.h>

#include <charconv>
#include <map>

namespace pclprompt {
namespace {

std::string shortest(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

bool mentions(const std::vector<ConfigError>& errors, const std::string& source, const std::string& text) {
  for (const auto& e : errors) {
    if (e.source == source && e.message.find(text) != std::string::npos) return true;
  }
  return false;
}

TEST(Config, EmptyTextGivesDefaults) {
  for (const std::string text : {"", "\n\n", "# only a comment\n   \n"}) {
    const auto r = parse_config(text);
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(*r.config, RunConfig{});
  }
}

TEST(Config, CommentsAndWhitespaceAreIgnored) {
  const auto r = parse_config("  tune.epochs =  7   # short run\nstrategy.kind=vpt_deep\n");
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.config->tune.epochs, 7u);
  EXPECT_EQ(r.config->strategy.kind, StrategyKind::VptDeep);
}

TEST(Config, OverridesApplyAfterFile) {
  const auto r = parse_config("tune.epochs = 7\n", "file", {"tune.epochs=3", "run.seed = 5"});
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.config->tune.epochs, 3u);
  EXPECT_EQ(r.config->run.seed, 5u);
  EXPECT_EQ(r.config->tune_config().seed, 5u);
}

TEST(Config, IdptInsertLayerOneIsRejected) {
  const auto r = parse_config("strategy.kind = idpt\nstrategy.insert_layers = 1\n", "cfg");
  EXPECT_FALSE(r.ok());
  ASSERT_FALSE(r.errors.empty());
  EXPECT_EQ(r.errors[0].source, "cfg:2");
}

TEST(Config, AllErrorsAreReportedWithLines) {
  const std::string text =
      "model.depth = two\n"
      "no equals sign here\n"
      "model.bogus = 1\n"
      "tune.epochs = 5\n"
      "tune.epochs = 6\n"
      "data.points = -3\n";
  const auto r = parse_config(text, "bad.cfg", {"strategy.kind=prefix", "nonsense"});
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(mentions(r.errors, "bad.cfg:1", "model.depth"));
  EXPECT_TRUE(mentions(r.errors, "bad.cfg:2", "expected"));
  EXPECT_TRUE(mentions(r.errors, "bad.cfg:3", "unknown key"));
  EXPECT_TRUE(mentions(r.errors, "bad.cfg:5", "already set at bad.cfg:4"));
  EXPECT_TRUE(mentions(r.errors, "bad.cfg:6", "data.points"));
  EXPECT_TRUE(mentions(r.errors, "--set 1", "strategy.kind"));
  EXPECT_TRUE(mentions(r.errors, "--set 2", "expected"));
  EXPECT_EQ(r.errors.size(), 7u);
}

TEST(Config, CrossSectionChecks) {
  const auto r = parse_config("tune.lr = 1e-5\ntune.min_lr = 1e-3\nfewshot.n_way = 4\ndata.classes = sphere,cube\n");
  EXPECT_FALSE(r.ok());
  EXPECT_EQ(r.errors.size(), 2u);
}

TEST(Config, RenderParseRoundTrip) {
  const std::map<std::string, std::vector<std::string>> choices{
      {"run.seed", {"0", "7", "18446744073709551615"}},
      {"run.threads", {"1", "4"}},
      {"run.output_dir", {"runs", "out/a b"}},
      {"model.depth", {"2", "4", "6"}},
      {"model.width", {"32", "64"}},
      {"model.patches", {"8", "16"}},
      {"strategy.kind", {"full_finetune", "head_only", "vpt_shallow", "vpt_deep", "idpt"}},
      {"strategy.generator", {"mlp1", "mlp3", "edgeconv1", "edgeconv2", "edgeconv3", "transformer1"}},
      {"strategy.prompts", {"1", "10"}},
      {"strategy.top_k", {"1", "3"}},
      {"strategy.sharing", {"shared", "independent"}},
      {"strategy.knn_k", {"auto", "4"}},
      {"head.hidden", {"0", "32"}},
      {"data.classes", {"sphere,cube,plane", "torus,cross,cone,capsule,cylinder"}},
      {"data.submodes", {"clean", "jitter_noise,clean"}},
      {"data.samples_per_cell", {"5", "40"}},
      {"pretrain.subset", {"clean", "all"}},
      {"tune.augment", {"none", "scale,translate", "rotate_z,jitter"}},
      {"eval.votes", {"1", "10"}},
      {"export.tap", {"input_N", "output_N"}},
  };
  Rng rng(80);
  int parsed = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> overrides;
    for (const auto& [key, values] : choices) {
      if (std::uniform_int_distribution<int>(0, 2)(rng) == 0) continue;
      overrides.push_back(key + "=" + values[std::uniform_int_distribution<std::size_t>(0, values.size() - 1)(rng)]);
    }
    const double lr = std::uniform_real_distribution<double>(1e-4, 1e-2)(rng);
    overrides.push_back("tune.lr=" + shortest(lr));
    overrides.push_back("pretrain.mask_ratio=" + shortest(std::uniform_real_distribution<double>(0, 0.9)(rng)));
    const auto first = parse_config("", "x", overrides);
    if (!first.ok()) continue;
    ++parsed;
    EXPECT_EQ(first.config->tune.optim.lr, lr);
    const auto text = render_config(*first.config);
    const auto second = parse_config(text);
    ASSERT_TRUE(second.ok()) << text;
    EXPECT_EQ(*second.config, *first.config) << text;
    EXPECT_EQ(render_config(*second.config), text);
  }
  EXPECT_GT(parsed, 50);
}

TEST(Config, ParsingIsTotal) {
  Rng rng(81);
  const std::string alphabet = "abcdefgz.=# \t\n,_-0123456789eE+";
  auto keys = config_keys();
  for (int trial = 0; trial < 2000; ++trial) {
    std::string text;
    const int len = std::uniform_int_distribution<int>(0, 120)(rng);
    for (int i = 0; i < len; ++i) {
      if (std::uniform_int_distribution<int>(0, 15)(rng) == 0) {
        text += keys[std::uniform_int_distribution<std::size_t>(0, keys.size() - 1)(rng)] + " = ";
      } else {
        text += alphabet[std::uniform_int_distribution<std::size_t>(0, alphabet.size() - 1)(rng)];
      }
    }
    ConfigResult r;
    ASSERT_NO_THROW(r = parse_config(text)) << text;
    EXPECT_NE(r.ok(), !r.errors.empty());
  }
}

TEST(Config, EveryKeyRendersAndParses) {
  const auto text = render_config(RunConfig{});
  for (const auto& key : config_keys()) EXPECT_NE(text.find(key + " ="), std::string::npos) << key;
}

TEST(Config, DerivedPaths) {
  auto r = parse_config("run.output_dir = out\n");
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.config->backbone_path(), "out/backbone.ckpt");
  EXPECT_EQ(r.config->tunables_path(), "out/tunables.ckpt");
  EXPECT_EQ(r.config->head_config().classes, 8u);
  r = parse_config("run.backbone = /tmp/b.ckpt\n");
  EXPECT_EQ(r.config->backbone_path(), "/tmp/b.ckpt");
}

}  // namespace
}  // namespace pclprompt
