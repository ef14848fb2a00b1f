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

// Little-endian scalar encoding shared by the cloud and checkpoint formats.

#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace pclprompt::io {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename V>
void put(std::vector<unsigned char>& out, V value) {
  static_assert(std::is_arithmetic_v<V>);
  unsigned char bytes[sizeof(V)];
  std::memcpy(bytes, &value, sizeof(V));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(V));
  for (unsigned char b : bytes) out.push_back(b);
}

inline void put_bytes(std::vector<unsigned char>& out, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) out.push_back(p[i]);
}

// Bounds-checked cursor over an in-memory file image.
class Reader {
 public:
  Reader(const std::vector<unsigned char>& data, std::string what)
      : data_(data), what_(std::move(what)) {}

  template <typename V>
  V get() {
    static_assert(std::is_arithmetic_v<V>);
    need(sizeof(V));
    unsigned char bytes[sizeof(V)];
    std::memcpy(bytes, data_.data() + pos_, sizeof(V));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(V));
    pos_ += sizeof(V);
    V value;
    std::memcpy(&value, bytes, sizeof(V));
    return value;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  const unsigned char* take(std::size_t n) {
    need(n);
    const auto* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (n > data_.size() - pos_) {
      throw FormatError(what_ + ": truncated (need " + std::to_string(n) + " bytes at offset " +
                        std::to_string(pos_) + ", file has " + std::to_string(data_.size()) + ")");
    }
  }

  const std::vector<unsigned char>& data_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<unsigned char>& bytes);

}  // namespace pclprompt::io
