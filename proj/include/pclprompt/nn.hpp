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

// Parameter registry and the small layers shared by backbone, prompt
// generators and heads.

#pragma once

#include "pclprompt/autodiff.hpp"
#include "pclprompt/geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace pclprompt {

using ad::Tensor;

enum class ParamGroup { Backbone, Prompt, Generator, Head, Pretrain };

inline const char* group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::Backbone: return "backbone";
    case ParamGroup::Prompt: return "prompt";
    case ParamGroup::Generator: return "generator";
    case ParamGroup::Head: return "head";
    case ParamGroup::Pretrain: return "pretrain";
  }
  return "?";
}

template <typename T>
struct ParamEntry {
  std::string name;
  ParamGroup group;
  Tensor<T> tensor;
};

// Ordered name -> tensor table. Entries share storage with the module that
// registered them; a tensor's requires_grad flag is its trainable flag.
template <typename T>
class ParamStore {
 public:
  void add(std::string name, ParamGroup group, const Tensor<T>& tensor) {
    if (index_.count(name)) throw std::logic_error("duplicate parameter '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), group, tensor});
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  const Tensor<T>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter '" + name + "'");
    return entries_[it->second].tensor;
  }

  const std::vector<ParamEntry<T>>& entries() const { return entries_; }

  void set_trainable(ParamGroup group, bool trainable) {
    for (auto& e : entries_) {
      if (e.group == group) e.tensor.set_requires_grad(trainable);
    }
  }

  std::vector<Tensor<T>> trainable() const {
    std::vector<Tensor<T>> out;
    for (const auto& e : entries_) {
      if (e.tensor.requires_grad()) out.push_back(e.tensor);
    }
    return out;
  }

  std::size_t count(ParamGroup group, bool trainable_only) const {
    std::size_t n = 0;
    for (const auto& e : entries_) {
      if (e.group == group && (!trainable_only || e.tensor.requires_grad())) {
        n += e.tensor.numel();
      }
    }
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

 private:
  std::vector<ParamEntry<T>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
template <typename T>
Tensor<T> uniform_init(ad::Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> values(ad::numel(shape));
  for (auto& v : values) v = static_cast<T>(dist(rng));
  return Tensor<T>::from_vector(std::move(shape), std::move(values));
}

template <typename T>
Tensor<T> deep_copy(const Tensor<T>& t) {
  return t.detach(t.requires_grad());
}

template <typename T>
struct Linear {
  Tensor<T> weight;  // in x out
  Tensor<T> bias;    // out

  static Linear init(std::size_t in, std::size_t out, Rng& rng) {
    return {uniform_init<T>({in, out}, in, rng), uniform_init<T>({out}, in, rng)};
  }
  Tensor<T> operator()(const Tensor<T>& x) const {
    return ad::add(ad::matmul(x, weight), bias);
  }
  void register_params(ParamStore<T>& store, const std::string& prefix, ParamGroup g) const {
    store.add(prefix + ".weight", g, weight);
    store.add(prefix + ".bias", g, bias);
  }
  Linear clone() const { return {deep_copy(weight), deep_copy(bias)}; }
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
};

// Row-wise layer normalization with learned gain and shift.
template <typename T>
struct AffineNorm {
  Tensor<T> weight;
  Tensor<T> bias;

  static AffineNorm init(std::size_t width) {
    return {Tensor<T>::full({width}, T(1)), Tensor<T>::zeros({width})};
  }
  Tensor<T> operator()(const Tensor<T>& x) const {
    return ad::add(ad::mul(ad::layer_norm(x, 1, T(1e-5)), weight), bias);
  }
  void register_params(ParamStore<T>& store, const std::string& prefix, ParamGroup g) const {
    store.add(prefix + ".weight", g, weight);
    store.add(prefix + ".bias", g, bias);
  }
  AffineNorm clone() const { return {deep_copy(weight), deep_copy(bias)}; }
};

// Pre-norm transformer block: x + attn(norm1(x)), then x + mlp(norm2(x)).
template <typename T>
struct EncoderLayer {
  std::size_t heads = 1;
  AffineNorm<T> norm1;
  Linear<T> qkv;
  Linear<T> proj;
  AffineNorm<T> norm2;
  Linear<T> fc1;
  Linear<T> fc2;

  static EncoderLayer init(std::size_t width, std::size_t heads, std::size_t ffn_mult, Rng& rng) {
    EncoderLayer layer;
    layer.heads = heads;
    layer.norm1 = AffineNorm<T>::init(width);
    layer.qkv = Linear<T>::init(width, 3 * width, rng);
    layer.proj = Linear<T>::init(width, width, rng);
    layer.norm2 = AffineNorm<T>::init(width);
    layer.fc1 = Linear<T>::init(width, ffn_mult * width, rng);
    layer.fc2 = Linear<T>::init(ffn_mult * width, width, rng);
    return layer;
  }

  Tensor<T> attention(const Tensor<T>& x) const {
    const std::size_t width = x.dim(1);
    const std::size_t head_dim = width / heads;
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(head_dim));
    const auto packed = qkv(x);
    std::vector<Tensor<T>> outputs;
    outputs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      const auto q = ad::slice(packed, 1, h * head_dim, (h + 1) * head_dim);
      const auto k = ad::slice(packed, 1, width + h * head_dim, width + (h + 1) * head_dim);
      const auto v =
          ad::slice(packed, 1, 2 * width + h * head_dim, 2 * width + (h + 1) * head_dim);
      const auto scores = ad::scale(ad::matmul(q, ad::transpose(k)), inv_sqrt);
      outputs.push_back(ad::matmul(ad::softmax(scores, 1), v));
    }
    const auto merged = heads == 1 ? outputs.front() : ad::concat(outputs, 1);
    return proj(merged);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    const auto h = ad::add(x, attention(norm1(x)));
    return ad::add(h, fc2(ad::gelu(fc1(norm2(h)))));
  }

  void register_params(ParamStore<T>& store, const std::string& prefix, ParamGroup g) const {
    norm1.register_params(store, prefix + ".norm1", g);
    qkv.register_params(store, prefix + ".attn.qkv", g);
    proj.register_params(store, prefix + ".attn.proj", g);
    norm2.register_params(store, prefix + ".norm2", g);
    fc1.register_params(store, prefix + ".mlp.fc1", g);
    fc2.register_params(store, prefix + ".mlp.fc2", g);
  }

  EncoderLayer clone() const {
    return {heads, norm1.clone(), qkv.clone(), proj.clone(), norm2.clone(), fc1.clone(),
            fc2.clone()};
  }
};

}  // namespace pclprompt
