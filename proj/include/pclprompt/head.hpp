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

#include "pclprompt/backbone.hpp"
#include "pclprompt/nn.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace pclprompt {

// Which final-layer components feed the classifier, always concatenated in
// the order CLS, pooled PROMPT, max-pooled PATCH.
struct HeadInputs {
  bool cls = true;
  bool prompt = false;
  bool patch_max = true;

  std::size_t count() const { return cls + prompt + patch_max; }
  bool operator==(const HeadInputs&) const = default;
};

HeadInputs parse_head_inputs(const std::string& text);
std::string render_head_inputs(const HeadInputs& inputs);

struct HeadConfig {
  std::size_t hidden = 0;  // 0 = backbone width
  std::size_t classes = 8;
  bool operator==(const HeadConfig&) const = default;
};

// Three-layer MLP classifier: in -> hidden -> hidden -> classes.
template <typename T>
struct ClassifierHead {
  HeadInputs inputs;
  Linear<T> fc1;
  Linear<T> fc2;
  Linear<T> fc3;

  static ClassifierHead init(const HeadInputs& inputs, std::size_t width,
                             const HeadConfig& config, Rng& rng) {
    if (inputs.count() == 0) throw std::invalid_argument("head needs at least one input");
    if (config.classes < 1) throw std::invalid_argument("head needs at least one class");
    const std::size_t hidden = config.hidden ? config.hidden : width;
    ClassifierHead head;
    head.inputs = inputs;
    head.fc1 = Linear<T>::init(inputs.count() * width, hidden, rng);
    head.fc2 = Linear<T>::init(hidden, hidden, rng);
    head.fc3 = Linear<T>::init(hidden, config.classes, rng);
    return head;
  }

  // Concatenated head input, 1 x (count * d).
  Tensor<T> features(const TokenSequence<T>& seq) const {
    std::vector<Tensor<T>> parts;
    if (inputs.cls) parts.push_back(seq.cls());
    if (inputs.prompt) {
      const std::size_t p = seq.prompt_count();
      if (p == 0) throw std::invalid_argument("head input PROMPT requested but sequence has no prompts");
      const auto block = seq.prompt_block();
      parts.push_back(p == 1 ? block : ad::max_reduce(block, 0));
    }
    if (inputs.patch_max) parts.push_back(ad::max_reduce(seq.patch_block(), 0));
    return parts.size() == 1 ? parts.front() : ad::concat(parts, 1);
  }

  Tensor<T> operator()(const TokenSequence<T>& seq) const {
    const auto x = features(seq);
    const auto out = fc3(ad::gelu(fc2(ad::gelu(fc1(x)))));
    return ad::reshape(out, {out.numel()});
  }

  void register_params(ParamStore<T>& store) const {
    fc1.register_params(store, "head.fc1", ParamGroup::Head);
    fc2.register_params(store, "head.fc2", ParamGroup::Head);
    fc3.register_params(store, "head.fc3", ParamGroup::Head);
  }

  ClassifierHead clone() const { return {inputs, fc1.clone(), fc2.clone(), fc3.clone()}; }
};

}  // namespace pclprompt
