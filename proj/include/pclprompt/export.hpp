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

// Token embeddings as CSV, one row per token:
//   sample,class,submode,role,token,f0,...,f{d-1}

#pragma once

#include "pclprompt/training.hpp"

#include <ostream>
#include <string>
#include <vector>

namespace pclprompt {

enum class EmbeddingTap { LastInput, LastOutput };

// "input_N" or "output_N"; throws std::invalid_argument otherwise.
EmbeddingTap parse_embedding_tap(const std::string& text);

template <typename T>
TokenSequence<T> tap_sequence(const TunedModel<T>& model, const PointCloud& cloud,
                              EmbeddingTap tap);

template <typename T>
void write_embeddings_csv(std::ostream& out, const TunedModel<T>& model,
                          const std::vector<PointCloud>& samples, EmbeddingTap tap);

}  // namespace pclprompt
