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

#pragma once

#include "pclprompt/geometry.hpp"
#include "pclprompt/nn.hpp"

#include <cstddef>
#include <vector>

namespace pclprompt {

struct BackboneConfig {
  std::size_t depth = 4;
  std::size_t width = 64;
  std::size_t heads = 4;
  std::size_t ffn_mult = 4;
  std::size_t patches = 16;       // m
  std::size_t patch_points = 16;  // k

  // Throws std::invalid_argument on inconsistent sizes.
  void validate() const;
  bool operator==(const BackboneConfig&) const = default;

  static BackboneConfig toy() { return {}; }
  // Sizes used for parameter accounting against published counts.
  static BackboneConfig paper_scale() { return {12, 384, 6, 4, 64, 32}; }
};

enum class Role : unsigned char { Cls, Prompt, Patch };

const char* role_name(Role r);

// Token matrix [CLS; PROMPT x p; PATCH x m] entering or leaving a layer.
template <typename T>
struct TokenSequence {
  Tensor<T> tokens;  // L x d
  std::vector<Role> roles;
  std::size_t layer_index = 0;  // 0 = embedding output, i = output of layer i

  std::size_t length() const { return roles.size(); }
  std::size_t prompt_count() const;
  std::size_t patch_count() const { return length() - 1 - prompt_count(); }
  Tensor<T> cls() const { return ad::slice(tokens, 0, 0, 1); }
  Tensor<T> prompt_block() const { return ad::slice(tokens, 0, 1, 1 + prompt_count()); }
  Tensor<T> patch_block() const { return ad::slice(tokens, 0, 1 + prompt_count(), length()); }

  // Replaces (or inserts) the prompt block right after CLS.
  TokenSequence with_prompts(const Tensor<T>& prompts) const;
};

// Mini-PointNet patch embedder, positional MLP, CLS token and N pre-norm
// encoder layers.
template <typename T>
class Backbone {
 public:
  Backbone() = default;
  Backbone(const BackboneConfig& config, Rng& rng);

  const BackboneConfig& config() const { return config_; }

  // Per-patch features: shared point MLP, max-pool, concat, second MLP, max-pool.
  Tensor<T> patch_features(const PatchSet& patches) const;
  Tensor<T> positional(const PatchSet& patches) const;
  // [CLS; E_0] with roles [CLS, PATCH x m] at layer 0.
  TokenSequence<T> embed_patches(const PatchSet& patches) const;
  // Applies layers seq.layer_index+1 .. last (inclusive).
  TokenSequence<T> encode(TokenSequence<T> seq, std::size_t last) const;
  const EncoderLayer<T>& layer(std::size_t index) const { return layers_.at(index - 1); }

  PatchSet group(const PointCloud& cloud) const;
  TokenSequence<T> forward_plain(const PointCloud& cloud) const;

  void register_params(ParamStore<T>& store) const;
  Backbone clone() const;

  Linear<T>& point_mlp() { return point_mlp_; }
  Linear<T>& patch_mlp() { return patch_mlp_; }
  Linear<T>& pos_fc1() { return pos_fc1_; }
  Linear<T>& pos_fc2() { return pos_fc2_; }
  Tensor<T>& cls_token() { return cls_; }
  const Tensor<T>& cls_token() const { return cls_; }
  EncoderLayer<T>& mutable_layer(std::size_t index) { return layers_.at(index - 1); }

 private:
  BackboneConfig config_;
  Linear<T> point_mlp_;  // 3 -> d/2
  Linear<T> patch_mlp_;  // d -> d
  Linear<T> pos_fc1_;    // 3 -> d
  Linear<T> pos_fc2_;    // d -> d
  Tensor<T> cls_;        // 1 x d
  std::vector<EncoderLayer<T>> layers_;
};

// Tensor view of the patch geometry.
template <typename T>
Tensor<T> groups_tensor(const PatchSet& patches);
template <typename T>
Tensor<T> centers_tensor(const PatchSet& patches);

extern template struct TokenSequence<float>;
extern template struct TokenSequence<double>;
extern template class Backbone<float>;
extern template class Backbone<double>;

}  // namespace pclprompt
