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

// Binary checkpoints. A backbone file holds the shared pretrained weights; a
// tunables file holds only what one task trained, so many tasks can share one
// backbone on disk.
//
// Layout (little-endian):
//   "IDPT" | u32 version=1 | u32 role | u32 n + config text
//   u32 tensor count, then per tensor:
//   u32 n + name | u32 dtype (0=f32, 1=f64) | u32 rank | u64 dims[rank] | raw values

#pragma once

#include "pclprompt/binary_io.hpp"
#include "pclprompt/nn.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pclprompt {

enum class CheckpointRole : std::uint32_t { Backbone = 0, Tunables = 1 };

const char* checkpoint_role_name(CheckpointRole role);

struct CheckpointTensor {
  std::string name;
  ad::DType dtype = ad::DType::F32;
  ad::Shape shape;
  std::vector<unsigned char> bytes;  // little-endian values
};

struct Checkpoint {
  CheckpointRole role = CheckpointRole::Backbone;
  std::string config_text;
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor* find(const std::string& name) const;
  std::size_t byte_size() const;  // size of the encoded file
};

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt);
// Validates the whole image before returning; throws io::FormatError.
Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes,
                             const std::string& what = "checkpoint");

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Snapshot of every entry in `store` (in registry order).
template <typename T>
Checkpoint make_checkpoint(CheckpointRole role, const ParamStore<T>& store,
                           const std::string& config_text);

// Copies tensors into `store`. Every store entry must be present with matching
// dtype and shape; nothing is written unless all of them match. Throws
// io::FormatError naming the first mismatched tensor.
template <typename T>
void restore_checkpoint(const Checkpoint& ckpt, CheckpointRole expected, ParamStore<T>& store);

}  // namespace pclprompt
