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

#include "pclprompt/checkpoint.hpp"

#include <gtest/gtest.h>

namespace pclprompt {
namespace {

template <typename T>
std::vector<std::vector<T>> snapshot(const ParamStore<T>& store) {
  std::vector<std::vector<T>> out;
  for (const auto& e : store.entries()) out.emplace_back(e.tensor.value().begin(), e.tensor.value().end());
  return out;
}

StrategyConfig strategy_of(StrategyKind kind) {
  StrategyConfig s;
  s.kind = kind;
  return s;
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const io::FormatError& e) {
    return e.what();
  }
  return "";
}

TEST(Checkpoint, RoundTripIsBitwise) {
  Rng rng(90);
  testkit::TempDir dir("ckpt");
  Backbone<float> a(BackboneConfig::toy(), rng);
  Backbone<float> b(BackboneConfig::toy(), rng);
  ParamStore<float> sa, sb;
  a.register_params(sa);
  b.register_params(sb);
  const auto ckpt = make_checkpoint(CheckpointRole::Backbone, sa, "model.depth = 4\n");
  save_checkpoint(dir.file("b.ckpt"), ckpt);
  const auto loaded = load_checkpoint(dir.file("b.ckpt"));
  EXPECT_EQ(loaded.config_text, "model.depth = 4\n");
  EXPECT_EQ(encode_checkpoint(loaded), encode_checkpoint(ckpt));
  EXPECT_EQ(loaded.byte_size(), encode_checkpoint(ckpt).size());
  restore_checkpoint(loaded, CheckpointRole::Backbone, sb);
  EXPECT_EQ(snapshot(sb), snapshot(sa));
}

TEST(Checkpoint, DoublePrecisionRoundTrip) {
  Rng rng(91);
  Backbone<double> a(testkit::grad_check_config(), rng);
  Backbone<double> b(testkit::grad_check_config(), rng);
  ParamStore<double> sa, sb;
  a.register_params(sa);
  b.register_params(sb);
  restore_checkpoint(decode_checkpoint(encode_checkpoint(make_checkpoint(CheckpointRole::Backbone, sa, ""))),
                     CheckpointRole::Backbone, sb);
  EXPECT_EQ(snapshot(sb), snapshot(sa));
  ParamStore<float> sf;
  Backbone<float> f(testkit::grad_check_config(), rng);
  f.register_params(sf);
  EXPECT_NE(error_of([&] {
              restore_checkpoint(make_checkpoint(CheckpointRole::Backbone, sa, ""), CheckpointRole::Backbone, sf);
            }).find("backbone.embed.fc1.weight"),
            std::string::npos);
}

TEST(Checkpoint, CorruptMagicLeavesStoreUntouched) {
  Rng rng(92);
  Backbone<float> a(testkit::grad_check_config(), rng);
  ParamStore<float> sa;
  a.register_params(sa);
  auto bytes = encode_checkpoint(make_checkpoint(CheckpointRole::Backbone, sa, ""));
  bytes[1] = 'Q';
  EXPECT_THROW(decode_checkpoint(bytes), io::FormatError);
  testkit::TempDir dir("magic");
  io::write_file(dir.file("bad.ckpt"), bytes);
  EXPECT_THROW(load_checkpoint(dir.file("bad.ckpt")), io::FormatError);
}

TEST(Checkpoint, TruncationAndTrailingBytesAreRejected) {
  Rng rng(93);
  auto cfg = testkit::grad_check_config();
  Backbone<float> a(cfg, rng);
  ParamStore<float> sa;
  a.register_params(sa);
  const auto bytes = encode_checkpoint(make_checkpoint(CheckpointRole::Backbone, sa, "x"));
  for (std::size_t len = 0; len < bytes.size(); len += 1 + len / 16) {
    EXPECT_THROW(decode_checkpoint({bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(len)}),
                 io::FormatError)
        << len;
  }
  auto longer = bytes;
  longer.push_back(0);
  EXPECT_THROW(decode_checkpoint(longer), io::FormatError);
}

TEST(Checkpoint, RandomDamageNeverCrashes) {
  Rng rng(94);
  Backbone<float> a(testkit::grad_check_config(), rng);
  ParamStore<float> sa;
  a.register_params(sa);
  const auto bytes = encode_checkpoint(make_checkpoint(CheckpointRole::Backbone, sa, "x"));
  for (int trial = 0; trial < 300; ++trial) {
    auto damaged = bytes;
    for (int k = 0; k < 3; ++k) {
      damaged[std::uniform_int_distribution<std::size_t>(0, damaged.size() - 1)(rng)] ^=
          static_cast<unsigned char>(1 + trial % 255);
    }
    try {
      decode_checkpoint(damaged);
    } catch (const io::FormatError&) {
    }
  }
}

TEST(Checkpoint, MismatchNamesFirstTensorAndWritesNothing) {
  Rng rng(95);
  auto cfg = testkit::grad_check_config();
  Backbone<float> a(cfg, rng);
  ParamStore<float> sa;
  a.register_params(sa);
  auto ckpt = make_checkpoint(CheckpointRole::Backbone, sa, "");

  Backbone<float> b(cfg, rng);
  ParamStore<float> sb;
  b.register_params(sb);
  const auto before = snapshot(sb);

  auto reshaped = ckpt;
  reshaped.tensors[3].shape = {reshaped.tensors[3].shape[1], reshaped.tensors[3].shape[0]};
  reshaped.tensors[5].shape = {reshaped.tensors[5].shape[1], reshaped.tensors[5].shape[0]};
  const auto msg = error_of([&] { restore_checkpoint(reshaped, CheckpointRole::Backbone, sb); });
  EXPECT_NE(msg.find(ckpt.tensors[3].name), std::string::npos) << msg;
  EXPECT_EQ(snapshot(sb), before);

  auto missing = ckpt;
  const auto dropped = missing.tensors.back().name;
  missing.tensors.pop_back();
  EXPECT_NE(error_of([&] { restore_checkpoint(missing, CheckpointRole::Backbone, sb); }).find(dropped),
            std::string::npos);

  auto extra = ckpt;
  extra.tensors.push_back(extra.tensors.front());
  extra.tensors.back().name = "backbone.layer9.norm1.weight";
  EXPECT_NE(error_of([&] { restore_checkpoint(extra, CheckpointRole::Backbone, sb); })
                .find("backbone.layer9.norm1.weight"),
            std::string::npos);

  EXPECT_THROW(restore_checkpoint(ckpt, CheckpointRole::Tunables, sb), io::FormatError);
  EXPECT_EQ(snapshot(sb), before);
}

TEST(Checkpoint, TunablesCarryNoFrozenTensors) {
  Rng rng(96);
  Backbone<float> bb(BackboneConfig::toy(), rng);
  for (auto kind : {StrategyKind::HeadOnly, StrategyKind::VptShallow, StrategyKind::VptDeep, StrategyKind::Idpt,
                    StrategyKind::FullFinetune}) {
    const auto model = TunedModel<float>::create(bb, strategy_of(kind), HeadConfig{}, 1);
    ParamStore<float> store;
    model.register_tunables(store);
    const auto ckpt = make_checkpoint(CheckpointRole::Tunables, store, "");
    std::size_t backbone_tensors = 0;
    for (const auto& t : ckpt.tensors) backbone_tensors += t.name.rfind("backbone.", 0) == 0;
    if (kind == StrategyKind::FullFinetune) {
      EXPECT_GT(backbone_tensors, 0u);
    } else {
      EXPECT_EQ(backbone_tensors, 0u) << strategy_name(kind);
    }
  }
}

TEST(Checkpoint, IdptTunablesAreUnderATenthOfBackboneAtPaperScale) {
  Rng rng(97);
  Backbone<float> bb(BackboneConfig::paper_scale(), rng);
  const auto model = TunedModel<float>::create(bb, strategy_of(StrategyKind::Idpt), HeadConfig{256, 15}, 1);
  ParamStore<float> backbone_store, tunable_store;
  model.backbone.register_params(backbone_store);
  model.register_tunables(tunable_store);
  const double backbone_bytes = double(make_checkpoint(CheckpointRole::Backbone, backbone_store, "").byte_size());
  const double tunable_bytes = double(make_checkpoint(CheckpointRole::Tunables, tunable_store, "").byte_size());
  EXPECT_LT(tunable_bytes, 0.1 * backbone_bytes);
}

}  // namespace
}  // namespace pclprompt
