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

#include "pclprompt/backbone.hpp"

#include <stdexcept>
#include <string>

namespace pclprompt {

void BackboneConfig::validate() const {
  if (depth < 2) throw std::invalid_argument("model.depth must be >= 2");
  if (width < 2 || width % 2) throw std::invalid_argument("model.width must be even and >= 2");
  if (heads == 0 || width % heads) {
    throw std::invalid_argument("model.width must be divisible by model.heads");
  }
  if (ffn_mult == 0) throw std::invalid_argument("model.ffn_mult must be >= 1");
  if (patches == 0 || patch_points == 0) {
    throw std::invalid_argument("model.patches and model.patch_points must be >= 1");
  }
}

const char* role_name(Role r) {
  switch (r) {
    case Role::Cls: return "CLS";
    case Role::Prompt: return "PROMPT";
    case Role::Patch: return "PATCH";
  }
  return "?";
}

template <typename T>
std::size_t TokenSequence<T>::prompt_count() const {
  std::size_t n = 0;
  for (auto r : roles) n += r == Role::Prompt;
  return n;
}

template <typename T>
TokenSequence<T> TokenSequence<T>::with_prompts(const Tensor<T>& prompts) const {
  const std::size_t p = prompts.dim(0);
  TokenSequence out;
  out.tokens = ad::concat<T>({cls(), prompts, patch_block()}, 0);
  out.roles.reserve(1 + p + patch_count());
  out.roles.push_back(Role::Cls);
  out.roles.insert(out.roles.end(), p, Role::Prompt);
  out.roles.insert(out.roles.end(), patch_count(), Role::Patch);
  out.layer_index = layer_index;
  return out;
}

template <typename T>
Tensor<T> groups_tensor(const PatchSet& patches) {
  std::vector<T> values(patches.groups.begin(), patches.groups.end());
  return Tensor<T>::from_vector({patches.m * patches.k, 3}, std::move(values));
}

template <typename T>
Tensor<T> centers_tensor(const PatchSet& patches) {
  std::vector<T> values(patches.centers.begin(), patches.centers.end());
  return Tensor<T>::from_vector({patches.m, 3}, std::move(values));
}

template <typename T>
Backbone<T>::Backbone(const BackboneConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const std::size_t d = config_.width;
  point_mlp_ = Linear<T>::init(3, d / 2, rng);
  patch_mlp_ = Linear<T>::init(d, d, rng);
  pos_fc1_ = Linear<T>::init(3, d, rng);
  pos_fc2_ = Linear<T>::init(d, d, rng);
  cls_ = Tensor<T>::zeros({1, d});
  layers_.reserve(config_.depth);
  for (std::size_t i = 0; i < config_.depth; ++i) {
    layers_.push_back(EncoderLayer<T>::init(d, config_.heads, config_.ffn_mult, rng));
  }
}

template <typename T>
Tensor<T> Backbone<T>::patch_features(const PatchSet& patches) const {
  if (patches.m != config_.patches || patches.k != config_.patch_points) {
    throw std::invalid_argument("patch set " + std::to_string(patches.m) + "x" +
                                std::to_string(patches.k) + " does not match model " +
                                std::to_string(config_.patches) + "x" +
                                std::to_string(config_.patch_points));
  }
  const std::size_t m = patches.m;
  const std::size_t k = patches.k;
  const std::size_t half = config_.width / 2;
  const auto points = groups_tensor<T>(patches);
  const auto h1 = ad::gelu(point_mlp_(points));  // (m*k) x d/2
  const auto pooled1 = ad::reshape(ad::max_reduce(ad::reshape(h1, {m, k, half}), 1), {m, half});
  std::vector<std::size_t> owner(m * k);
  for (std::size_t i = 0; i < owner.size(); ++i) owner[i] = i / k;
  const auto spread = ad::gather(pooled1, std::move(owner));
  const auto h2 = patch_mlp_(ad::concat<T>({spread, h1}, 1));  // (m*k) x d
  return ad::reshape(ad::max_reduce(ad::reshape(h2, {m, k, config_.width}), 1),
                     {m, config_.width});
}

template <typename T>
Tensor<T> Backbone<T>::positional(const PatchSet& patches) const {
  return pos_fc2_(ad::gelu(pos_fc1_(centers_tensor<T>(patches))));
}

template <typename T>
TokenSequence<T> Backbone<T>::embed_patches(const PatchSet& patches) const {
  const auto patch_tokens = ad::add(patch_features(patches), positional(patches));
  TokenSequence<T> seq;
  seq.tokens = ad::concat<T>({cls_, patch_tokens}, 0);
  seq.roles.assign(1 + patches.m, Role::Patch);
  seq.roles[0] = Role::Cls;
  seq.layer_index = 0;
  return seq;
}

template <typename T>
TokenSequence<T> Backbone<T>::encode(TokenSequence<T> seq, std::size_t last) const {
  if (last > config_.depth || last < seq.layer_index) {
    throw std::invalid_argument("encode: cannot run from layer " +
                                std::to_string(seq.layer_index) + " to " + std::to_string(last));
  }
  for (std::size_t i = seq.layer_index + 1; i <= last; ++i) {
    seq.tokens = layer(i)(seq.tokens);
    seq.layer_index = i;
  }
  return seq;
}

template <typename T>
PatchSet Backbone<T>::group(const PointCloud& cloud) const {
  return group_patches(cloud, config_.patches, config_.patch_points);
}

template <typename T>
TokenSequence<T> Backbone<T>::forward_plain(const PointCloud& cloud) const {
  return encode(embed_patches(group(cloud)), config_.depth);
}

template <typename T>
void Backbone<T>::register_params(ParamStore<T>& store) const {
  const auto g = ParamGroup::Backbone;
  point_mlp_.register_params(store, "backbone.embed.fc1", g);
  patch_mlp_.register_params(store, "backbone.embed.fc2", g);
  pos_fc1_.register_params(store, "backbone.pos.fc1", g);
  pos_fc2_.register_params(store, "backbone.pos.fc2", g);
  store.add("backbone.cls", g, cls_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].register_params(store, "backbone.layer" + std::to_string(i + 1), g);
  }
}

template <typename T>
Backbone<T> Backbone<T>::clone() const {
  Backbone out;
  out.config_ = config_;
  out.point_mlp_ = point_mlp_.clone();
  out.patch_mlp_ = patch_mlp_.clone();
  out.pos_fc1_ = pos_fc1_.clone();
  out.pos_fc2_ = pos_fc2_.clone();
  out.cls_ = deep_copy(cls_);
  for (const auto& l : layers_) out.layers_.push_back(l.clone());
  return out;
}

template struct TokenSequence<float>;
template struct TokenSequence<double>;
template class Backbone<float>;
template class Backbone<double>;
template Tensor<float> groups_tensor<float>(const PatchSet&);
template Tensor<double> groups_tensor<double>(const PatchSet&);
template Tensor<float> centers_tensor<float>(const PatchSet&);
template Tensor<double> centers_tensor<double>(const PatchSet&);

}  // namespace pclprompt
