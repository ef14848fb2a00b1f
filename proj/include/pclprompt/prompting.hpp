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

// Tuning strategies on top of a frozen backbone: static prompts (shallow and
// deep), instance-aware dynamic prompts produced by a generator that reads the
// patch tokens of the preceding layer, and trainable-parameter accounting.

#pragma once

#include "pclprompt/backbone.hpp"
#include "pclprompt/head.hpp"
#include "pclprompt/nn.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pclprompt {

enum class StrategyKind { FullFinetune, HeadOnly, VptShallow, VptDeep, Idpt };
enum class GeneratorKind { Mlp1, Mlp3, EdgeConv1, EdgeConv2, EdgeConv3, Transformer1 };
enum class Sharing { Shared, Independent };

const char* strategy_name(StrategyKind kind);
StrategyKind parse_strategy_kind(const std::string& text);
const char* generator_name(GeneratorKind kind);
GeneratorKind parse_generator_kind(const std::string& text);
const char* sharing_name(Sharing s);
Sharing parse_sharing(const std::string& text);

struct StrategyConfig {
  StrategyKind kind = StrategyKind::Idpt;
  GeneratorKind generator = GeneratorKind::EdgeConv3;
  std::size_t prompt_count = 10;  // static prompts per insert layer
  std::size_t top_k = 1;          // dynamic prompts per insert layer
  std::vector<std::size_t> insert_layers;  // empty = default for kind
  Sharing sharing = Sharing::Shared;
  std::size_t knn_k = 0;  // 0 = min(8, m)
  std::optional<HeadInputs> head_inputs;  // empty = default for kind

  bool operator==(const StrategyConfig&) const = default;

  bool has_prompts() const {
    return kind == StrategyKind::VptShallow || kind == StrategyKind::VptDeep ||
           kind == StrategyKind::Idpt;
  }
  bool freezes_backbone() const { return kind != StrategyKind::FullFinetune; }

  // Human-readable problems; empty when consistent with the backbone.
  std::vector<std::string> problems(const BackboneConfig& backbone) const;
  // Throws std::invalid_argument listing problems().
  void validate(const BackboneConfig& backbone) const;
  // Copy with every default filled in.
  StrategyConfig resolved(const BackboneConfig& backbone) const;
};

// One dynamic-graph convolution: neighbours found in the current feature
// space, edge features [x_i, x_j - x_i] through a shared linear + GELU,
// max over neighbours.
template <typename T>
struct EdgeConvLayer {
  Linear<T> edge;

  static EdgeConvLayer init(std::size_t in, std::size_t out, Rng& rng) {
    return {Linear<T>::init(2 * in, out, rng)};
  }
  Tensor<T> operator()(const Tensor<T>& features, std::size_t knn_k) const;
  EdgeConvLayer clone() const { return {edge.clone()}; }
};

template <typename T>
struct PromptGenerator {
  GeneratorKind kind = GeneratorKind::EdgeConv3;
  std::size_t knn_k = 8;
  std::vector<EdgeConvLayer<T>> edgeconvs;
  Linear<T> fusion;  // edgeconv kinds only
  std::vector<Linear<T>> mlps;
  std::vector<EncoderLayer<T>> blocks;

  static PromptGenerator init(GeneratorKind kind, const BackboneConfig& backbone,
                              std::size_t knn_k, Rng& rng);
  // Per-patch features m x d ahead of pooling.
  Tensor<T> features(const Tensor<T>& patch_tokens) const;
  // K x d prompts: per-feature max (K=1) or top-K over the patches.
  Tensor<T> generate(const Tensor<T>& patch_tokens, std::size_t top_k) const;
  void register_params(ParamStore<T>& store, const std::string& prefix) const;
  PromptGenerator clone() const;
};

// Strategy-specific tunables and the tuned forward pass.
template <typename T>
class PromptModule {
 public:
  PromptModule() = default;
  // `strategy` must already be validated; it is resolved here.
  PromptModule(const StrategyConfig& strategy, const BackboneConfig& backbone, Rng& rng);

  const StrategyConfig& strategy() const { return strategy_; }

  // Continues from seq.layer_index through the last layer, inserting static or
  // generated prompts at their layers. When `last_input` is given it receives
  // the sequence entering the final layer.
  TokenSequence<T> run(const Backbone<T>& backbone, TokenSequence<T> seq,
                       TokenSequence<T>* last_input = nullptr) const;
  // Lowest layer whose input this module changes; depth + 1 when none.
  std::size_t first_active_layer() const;

  const std::map<std::size_t, Tensor<T>>& static_prompts() const { return static_prompts_; }
  const std::vector<PromptGenerator<T>>& generators() const { return generators_; }
  const PromptGenerator<T>& generator_for(std::size_t layer) const {
    return generators_.at(generator_for_layer_.at(layer));
  }

  void register_params(ParamStore<T>& store) const;
  PromptModule clone() const;

 private:
  StrategyConfig strategy_;
  std::size_t depth_ = 0;
  std::map<std::size_t, Tensor<T>> static_prompts_;
  std::vector<PromptGenerator<T>> generators_;
  std::map<std::size_t, std::size_t> generator_for_layer_;
};

template <typename T>
TokenSequence<T> forward_tuned(const PointCloud& cloud, const Backbone<T>& backbone,
                               const PromptModule<T>& prompts) {
  return prompts.run(backbone, backbone.embed_patches(backbone.group(cloud)));
}

struct ParamBreakdown {
  std::size_t backbone = 0;   // trainable backbone parameters
  std::size_t prompts = 0;    // static prompt tokens
  std::size_t generator = 0;  // dynamic prompt generators
  std::size_t head = 0;
  std::size_t total_trainable = 0;
  std::size_t backbone_all = 0;
  std::size_t total_all = 0;  // backbone + head: the deployed model
  double ratio = 0;           // total_trainable / total_all
};

ParamBreakdown count_trainable(const StrategyConfig& strategy, const BackboneConfig& backbone,
                               const HeadConfig& head);

template <typename T>
ParamBreakdown count_registry(const ParamStore<T>& store);

extern template struct EdgeConvLayer<float>;
extern template struct EdgeConvLayer<double>;
extern template struct PromptGenerator<float>;
extern template struct PromptGenerator<double>;
extern template class PromptModule<float>;
extern template class PromptModule<double>;

}  // namespace pclprompt
