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

#include "pclprompt/prompting.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace pclprompt {

const char* strategy_name(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::FullFinetune: return "full_finetune";
    case StrategyKind::HeadOnly: return "head_only";
    case StrategyKind::VptShallow: return "vpt_shallow";
    case StrategyKind::VptDeep: return "vpt_deep";
    case StrategyKind::Idpt: return "idpt";
  }
  return "?";
}

StrategyKind parse_strategy_kind(const std::string& text) {
  for (auto k : {StrategyKind::FullFinetune, StrategyKind::HeadOnly, StrategyKind::VptShallow,
                 StrategyKind::VptDeep, StrategyKind::Idpt}) {
    if (text == strategy_name(k)) return k;
  }
  throw std::invalid_argument("unknown strategy kind '" + text + "'");
}

const char* generator_name(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::Mlp1: return "mlp1";
    case GeneratorKind::Mlp3: return "mlp3";
    case GeneratorKind::EdgeConv1: return "edgeconv1";
    case GeneratorKind::EdgeConv2: return "edgeconv2";
    case GeneratorKind::EdgeConv3: return "edgeconv3";
    case GeneratorKind::Transformer1: return "transformer1";
  }
  return "?";
}

GeneratorKind parse_generator_kind(const std::string& text) {
  for (auto k : {GeneratorKind::Mlp1, GeneratorKind::Mlp3, GeneratorKind::EdgeConv1,
                 GeneratorKind::EdgeConv2, GeneratorKind::EdgeConv3,
                 GeneratorKind::Transformer1}) {
    if (text == generator_name(k)) return k;
  }
  throw std::invalid_argument("unknown generator '" + text + "'");
}

const char* sharing_name(Sharing s) { return s == Sharing::Shared ? "shared" : "independent"; }

Sharing parse_sharing(const std::string& text) {
  if (text == "shared") return Sharing::Shared;
  if (text == "independent") return Sharing::Independent;
  throw std::invalid_argument("unknown sharing '" + text + "'");
}

HeadInputs parse_head_inputs(const std::string& text) {
  HeadInputs in{false, false, false};
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item == "cls") {
      in.cls = true;
    } else if (item == "prompt") {
      in.prompt = true;
    } else if (item == "patch_max") {
      in.patch_max = true;
    } else if (!item.empty()) {
      throw std::invalid_argument("unknown head input '" + item + "'");
    }
  }
  if (in.count() == 0) throw std::invalid_argument("head inputs must not be empty");
  return in;
}

std::string render_head_inputs(const HeadInputs& inputs) {
  std::string out;
  auto push = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  push(inputs.cls, "cls");
  push(inputs.prompt, "prompt");
  push(inputs.patch_max, "patch_max");
  return out;
}

std::vector<std::string> StrategyConfig::problems(const BackboneConfig& backbone) const {
  std::vector<std::string> out;
  const std::size_t depth = backbone.depth;
  if (prompt_count < 1) out.push_back("strategy.prompts must be >= 1");
  if (top_k < 1) out.push_back("strategy.top_k must be >= 1");
  if (kind == StrategyKind::Idpt && top_k > backbone.patches) {
    out.push_back("strategy.top_k must not exceed model.patches");
  }
  if (knn_k > backbone.patches) out.push_back("strategy.knn_k must not exceed model.patches");
  for (auto layer : insert_layers) {
    if (kind == StrategyKind::Idpt && (layer < 2 || layer > depth)) {
      out.push_back("idpt insert layer " + std::to_string(layer) + " outside [2, " +
                    std::to_string(depth) + "]: the generator reads the previous layer");
    } else if (kind != StrategyKind::Idpt && (layer < 1 || layer > depth)) {
      out.push_back("insert layer " + std::to_string(layer) + " outside [1, " +
                    std::to_string(depth) + "]");
    }
  }
  if (!has_prompts() && !insert_layers.empty()) {
    out.push_back(std::string(strategy_name(kind)) + " takes no insert layers");
  }
  if (kind == StrategyKind::VptShallow && insert_layers.size() > 1) {
    out.push_back("vpt_shallow inserts prompts at exactly one layer");
  }
  if (head_inputs) {
    if (head_inputs->count() == 0) out.push_back("strategy.head_inputs must not be empty");
    if (head_inputs->prompt && !has_prompts()) {
      out.push_back(std::string("head input 'prompt' unavailable for ") + strategy_name(kind));
    }
  }
  return out;
}

void StrategyConfig::validate(const BackboneConfig& backbone) const {
  const auto issues = problems(backbone);
  if (issues.empty()) return;
  std::string msg = "invalid strategy:";
  for (const auto& p : issues) msg += "\n  " + p;
  throw std::invalid_argument(msg);
}

StrategyConfig StrategyConfig::resolved(const BackboneConfig& backbone) const {
  StrategyConfig out = *this;
  if (out.insert_layers.empty()) {
    switch (kind) {
      case StrategyKind::Idpt: out.insert_layers = {backbone.depth}; break;
      case StrategyKind::VptShallow: out.insert_layers = {1}; break;
      case StrategyKind::VptDeep:
        for (std::size_t i = 1; i <= backbone.depth; ++i) out.insert_layers.push_back(i);
        break;
      default: break;
    }
  }
  std::sort(out.insert_layers.begin(), out.insert_layers.end());
  out.insert_layers.erase(std::unique(out.insert_layers.begin(), out.insert_layers.end()),
                          out.insert_layers.end());
  if (out.knn_k == 0) out.knn_k = std::min<std::size_t>(8, backbone.patches);
  if (!out.head_inputs) {
    out.head_inputs = kind == StrategyKind::Idpt ? HeadInputs{true, true, true}
                                                 : HeadInputs{true, false, true};
  }
  return out;
}

template <typename T>
Tensor<T> EdgeConvLayer<T>::operator()(const Tensor<T>& features, std::size_t knn_k) const {
  const std::size_t m = features.dim(0);
  const std::size_t d = features.dim(1);
  if (knn_k > m) {
    throw std::invalid_argument("edgeconv: knn_k=" + std::to_string(knn_k) + " exceeds " +
                                std::to_string(m) + " nodes");
  }
  auto neighbours = knn<T>(features.value(), features.value(), d, knn_k);
  std::vector<std::size_t> centers(m * knn_k);
  for (std::size_t i = 0; i < centers.size(); ++i) centers[i] = i / knn_k;
  // W [x_i; x_j - x_i] = x_i (W_top - W_bottom) + x_j W_bottom, so the linear
  // map runs once per node instead of once per edge.
  const auto w_top = ad::slice(edge.weight, 0, 0, d);
  const auto w_bottom = ad::slice(edge.weight, 0, d, 2 * d);
  const auto self_term = ad::add(ad::matmul(features, ad::sub(w_top, w_bottom)), edge.bias);
  const auto neighbour_term = ad::matmul(features, w_bottom);
  const auto h = ad::gelu(ad::add(ad::gather(self_term, std::move(centers)),
                                  ad::gather(neighbour_term, std::move(neighbours))));
  const std::size_t out = edge.out_features();
  return ad::reshape(ad::max_reduce(ad::reshape(h, {m, knn_k, out}), 1), {m, out});
}

template <typename T>
PromptGenerator<T> PromptGenerator<T>::init(GeneratorKind kind, const BackboneConfig& backbone,
                                            std::size_t knn_k, Rng& rng) {
  const std::size_t d = backbone.width;
  PromptGenerator g;
  g.kind = kind;
  g.knn_k = knn_k;
  std::size_t convs = 0;
  switch (kind) {
    case GeneratorKind::EdgeConv3: ++convs; [[fallthrough]];
    case GeneratorKind::EdgeConv2: ++convs; [[fallthrough]];
    case GeneratorKind::EdgeConv1:
      ++convs;
      for (std::size_t i = 0; i < convs; ++i) g.edgeconvs.push_back(EdgeConvLayer<T>::init(d, d, rng));
      g.fusion = Linear<T>::init(convs * d, d, rng);
      break;
    case GeneratorKind::Mlp1: g.mlps.push_back(Linear<T>::init(d, d, rng)); break;
    case GeneratorKind::Mlp3:
      for (int i = 0; i < 3; ++i) g.mlps.push_back(Linear<T>::init(d, d, rng));
      break;
    case GeneratorKind::Transformer1:
      g.blocks.push_back(EncoderLayer<T>::init(d, backbone.heads, backbone.ffn_mult, rng));
      break;
  }
  return g;
}

template <typename T>
Tensor<T> PromptGenerator<T>::features(const Tensor<T>& patch_tokens) const {
  if (!edgeconvs.empty()) {
    std::vector<Tensor<T>> scales;
    Tensor<T> x = patch_tokens;
    for (const auto& conv : edgeconvs) {
      x = conv(x, knn_k);
      scales.push_back(x);
    }
    return fusion(scales.size() == 1 ? scales.front() : ad::concat(scales, 1));
  }
  if (!mlps.empty()) {
    Tensor<T> x = patch_tokens;
    for (const auto& layer : mlps) x = ad::gelu(layer(x));
    return x;
  }
  return blocks.front()(patch_tokens);
}

template <typename T>
Tensor<T> PromptGenerator<T>::generate(const Tensor<T>& patch_tokens, std::size_t top_k) const {
  const auto f = features(patch_tokens);
  return top_k == 1 ? ad::max_reduce(f, 0) : ad::topk_reduce(f, 0, top_k);
}

template <typename T>
void PromptGenerator<T>::register_params(ParamStore<T>& store, const std::string& prefix) const {
  const auto g = ParamGroup::Generator;
  for (std::size_t i = 0; i < edgeconvs.size(); ++i) {
    edgeconvs[i].edge.register_params(store, prefix + ".edgeconv" + std::to_string(i + 1), g);
  }
  if (!edgeconvs.empty()) fusion.register_params(store, prefix + ".fusion", g);
  for (std::size_t i = 0; i < mlps.size(); ++i) {
    mlps[i].register_params(store, prefix + ".mlp" + std::to_string(i + 1), g);
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    blocks[i].register_params(store, prefix + ".block" + std::to_string(i + 1), g);
  }
}

template <typename T>
PromptGenerator<T> PromptGenerator<T>::clone() const {
  PromptGenerator out;
  out.kind = kind;
  out.knn_k = knn_k;
  for (const auto& c : edgeconvs) out.edgeconvs.push_back(c.clone());
  if (!edgeconvs.empty()) out.fusion = fusion.clone();
  for (const auto& l : mlps) out.mlps.push_back(l.clone());
  for (const auto& b : blocks) out.blocks.push_back(b.clone());
  return out;
}

template <typename T>
PromptModule<T>::PromptModule(const StrategyConfig& strategy, const BackboneConfig& backbone,
                              Rng& rng)
    : strategy_(strategy.resolved(backbone)), depth_(backbone.depth) {
  strategy_.validate(backbone);
  const std::size_t d = backbone.width;
  switch (strategy_.kind) {
    case StrategyKind::VptShallow:
    case StrategyKind::VptDeep: {
      std::normal_distribution<double> dist(0.0, 0.02);
      for (auto layer : strategy_.insert_layers) {
        std::vector<T> values(strategy_.prompt_count * d);
        for (auto& v : values) v = static_cast<T>(dist(rng));
        static_prompts_.emplace(
            layer, Tensor<T>::from_vector({strategy_.prompt_count, d}, std::move(values)));
      }
      break;
    }
    case StrategyKind::Idpt:
      if (strategy_.sharing == Sharing::Shared) {
        generators_.push_back(
            PromptGenerator<T>::init(strategy_.generator, backbone, strategy_.knn_k, rng));
        for (auto layer : strategy_.insert_layers) generator_for_layer_[layer] = 0;
      } else {
        for (auto layer : strategy_.insert_layers) {
          generator_for_layer_[layer] = generators_.size();
          generators_.push_back(
              PromptGenerator<T>::init(strategy_.generator, backbone, strategy_.knn_k, rng));
        }
      }
      break;
    default: break;
  }
}

template <typename T>
TokenSequence<T> PromptModule<T>::run(const Backbone<T>& backbone, TokenSequence<T> seq,
                                      TokenSequence<T>* last_input) const {
  for (std::size_t i = seq.layer_index + 1; i <= depth_; ++i) {
    if (auto it = static_prompts_.find(i); it != static_prompts_.end()) {
      seq = seq.with_prompts(it->second);
    }
    if (auto it = generator_for_layer_.find(i); it != generator_for_layer_.end()) {
      const auto prompts = generators_[it->second].generate(seq.patch_block(), strategy_.top_k);
      seq = seq.with_prompts(prompts);
    }
    if (last_input && i == depth_) *last_input = seq;
    seq.tokens = backbone.layer(i)(seq.tokens);
    seq.layer_index = i;
  }
  return seq;
}

template <typename T>
std::size_t PromptModule<T>::first_active_layer() const {
  std::size_t first = depth_ + 1;
  if (!static_prompts_.empty()) first = std::min(first, static_prompts_.begin()->first);
  if (!generator_for_layer_.empty()) first = std::min(first, generator_for_layer_.begin()->first);
  return first;
}

template <typename T>
void PromptModule<T>::register_params(ParamStore<T>& store) const {
  for (const auto& [layer, prompts] : static_prompts_) {
    store.add("prompt.layer" + std::to_string(layer), ParamGroup::Prompt, prompts);
  }
  if (strategy_.sharing == Sharing::Shared || generators_.size() <= 1) {
    if (!generators_.empty()) generators_.front().register_params(store, "generator");
  } else {
    for (const auto& [layer, index] : generator_for_layer_) {
      generators_[index].register_params(store, "generator.layer" + std::to_string(layer));
    }
  }
}

template <typename T>
PromptModule<T> PromptModule<T>::clone() const {
  PromptModule out;
  out.strategy_ = strategy_;
  out.depth_ = depth_;
  for (const auto& [layer, prompts] : static_prompts_) out.static_prompts_.emplace(layer, deep_copy(prompts));
  for (const auto& g : generators_) out.generators_.push_back(g.clone());
  out.generator_for_layer_ = generator_for_layer_;
  return out;
}

template <typename T>
ParamBreakdown count_registry(const ParamStore<T>& store) {
  ParamBreakdown b;
  b.backbone = store.count(ParamGroup::Backbone, true);
  b.prompts = store.count(ParamGroup::Prompt, true);
  b.generator = store.count(ParamGroup::Generator, true);
  b.head = store.count(ParamGroup::Head, true);
  b.total_trainable = b.backbone + b.prompts + b.generator + b.head;
  b.backbone_all = store.count(ParamGroup::Backbone, false);
  b.total_all = b.backbone_all + store.count(ParamGroup::Head, false);
  b.ratio = b.total_all ? static_cast<double>(b.total_trainable) / static_cast<double>(b.total_all)
                        : 0.0;
  return b;
}

ParamBreakdown count_trainable(const StrategyConfig& strategy, const BackboneConfig& backbone,
                               const HeadConfig& head) {
  Rng rng(0);
  const auto resolved = strategy.resolved(backbone);
  resolved.validate(backbone);
  // f32 storage is enough for counting; values are never read.
  Backbone<float> bb(backbone, rng);
  PromptModule<float> prompts(resolved, backbone, rng);
  const auto classifier = ClassifierHead<float>::init(*resolved.head_inputs, backbone.width, head, rng);
  ParamStore<float> store;
  bb.register_params(store);
  prompts.register_params(store);
  classifier.register_params(store);
  store.set_trainable(ParamGroup::Backbone, !resolved.freezes_backbone());
  store.set_trainable(ParamGroup::Prompt, true);
  store.set_trainable(ParamGroup::Generator, true);
  store.set_trainable(ParamGroup::Head, true);
  return count_registry(store);
}

template struct EdgeConvLayer<float>;
template struct EdgeConvLayer<double>;
template struct PromptGenerator<float>;
template struct PromptGenerator<double>;
template class PromptModule<float>;
template class PromptModule<double>;
template ParamBreakdown count_registry<float>(const ParamStore<float>&);
template ParamBreakdown count_registry<double>(const ParamStore<double>&);

}  // namespace pclprompt
