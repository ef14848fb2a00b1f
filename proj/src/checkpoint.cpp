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

#include "pclprompt/checkpoint.hpp"

namespace pclprompt {

namespace {

constexpr std::uint32_t kVersion = 1;

std::size_t dtype_size(ad::DType dtype) { return dtype == ad::DType::F32 ? 4 : 8; }

}  // namespace

const char* checkpoint_role_name(CheckpointRole role) {
  return role == CheckpointRole::Backbone ? "backbone" : "tunables";
}

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::size_t Checkpoint::byte_size() const { return encode_checkpoint(*this).size(); }

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<unsigned char> out;
  io::put_bytes(out, "IDPT", 4);
  io::put<std::uint32_t>(out, kVersion);
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.role));
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.config_text.size()));
  io::put_bytes(out, ckpt.config_text.data(), ckpt.config_text.size());
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    io::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    io::put_bytes(out, t.name.data(), t.name.size());
    io::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dtype));
    io::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) io::put<std::uint64_t>(out, d);
    io::put_bytes(out, t.bytes.data(), t.bytes.size());
  }
  return out;
}

Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes, const std::string& what) {
  io::Reader in(bytes, what);
  if (in.get_string(4) != "IDPT") throw io::FormatError(what + ": bad magic, expected IDPT");
  const auto version = in.get<std::uint32_t>();
  if (version != kVersion) {
    throw io::FormatError(what + ": unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const auto role = in.get<std::uint32_t>();
  if (role > 1) throw io::FormatError(what + ": unknown role " + std::to_string(role));
  ckpt.role = static_cast<CheckpointRole>(role);
  ckpt.config_text = in.get_string(in.get<std::uint32_t>());
  const auto count = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    t.name = in.get_string(in.get<std::uint32_t>());
    const auto dtype = in.get<std::uint32_t>();
    if (dtype > 1) {
      throw io::FormatError(what + ": tensor '" + t.name + "' has unknown dtype " +
                            std::to_string(dtype));
    }
    t.dtype = static_cast<ad::DType>(dtype);
    const auto rank = in.get<std::uint32_t>();
    std::size_t numel = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      t.shape.push_back(static_cast<std::size_t>(in.get<std::uint64_t>()));
      numel *= t.shape.back();
    }
    const std::size_t n = numel * dtype_size(t.dtype);
    const auto* data = in.take(n);
    t.bytes.assign(data, data + n);
    ckpt.tensors.push_back(std::move(t));
  }
  if (in.remaining()) throw io::FormatError(what + ": trailing bytes after tensor table");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  io::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
  return decode_checkpoint(io::read_file(path), path);
}

template <typename T>
Checkpoint make_checkpoint(CheckpointRole role, const ParamStore<T>& store,
                           const std::string& config_text) {
  Checkpoint ckpt;
  ckpt.role = role;
  ckpt.config_text = config_text;
  for (const auto& e : store.entries()) {
    CheckpointTensor t;
    t.name = e.name;
    t.dtype = ad::dtype_of<T>();
    t.shape = e.tensor.shape();
    for (T v : e.tensor.value()) io::put(t.bytes, v);
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

template <typename T>
void restore_checkpoint(const Checkpoint& ckpt, CheckpointRole expected, ParamStore<T>& store) {
  if (ckpt.role != expected) {
    throw io::FormatError(std::string("checkpoint role is ") + checkpoint_role_name(ckpt.role) +
                          ", expected " + checkpoint_role_name(expected));
  }
  std::vector<const CheckpointTensor*> sources;
  for (const auto& e : store.entries()) {
    const auto* t = ckpt.find(e.name);
    if (!t) throw io::FormatError("tensor '" + e.name + "' missing from checkpoint");
    if (t->dtype != ad::dtype_of<T>()) {
      throw io::FormatError("tensor '" + e.name + "' has dtype " +
                            (t->dtype == ad::DType::F32 ? "f32" : "f64") + ", model expects " +
                            (ad::dtype_of<T>() == ad::DType::F32 ? "f32" : "f64"));
    }
    if (t->shape != e.tensor.shape()) {
      throw io::FormatError("tensor '" + e.name + "' has shape " + ad::shape_str(t->shape) +
                            ", model expects " + ad::shape_str(e.tensor.shape()));
    }
    sources.push_back(t);
  }
  for (const auto& t : ckpt.tensors) {
    if (!store.contains(t.name)) {
      throw io::FormatError("checkpoint tensor '" + t.name + "' has no place in the model");
    }
  }
  std::size_t i = 0;
  for (const auto& e : store.entries()) {
    auto tensor = e.tensor;
    auto data = tensor.data();
    io::Reader in(sources[i]->bytes, e.name);
    for (auto& v : data) v = in.get<T>();
    ++i;
  }
}

template Checkpoint make_checkpoint<float>(CheckpointRole, const ParamStore<float>&,
                                           const std::string&);
template Checkpoint make_checkpoint<double>(CheckpointRole, const ParamStore<double>&,
                                            const std::string&);
template void restore_checkpoint<float>(const Checkpoint&, CheckpointRole, ParamStore<float>&);
template void restore_checkpoint<double>(const Checkpoint&, CheckpointRole, ParamStore<double>&);

}  // namespace pclprompt
