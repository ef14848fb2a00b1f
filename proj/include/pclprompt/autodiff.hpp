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

// Dense reverse-mode automatic differentiation over row-major tensors.
//
// A Tensor<T> is a handle to a graph node. Leaves are created by the factory
// functions; every op returns a new node that remembers its parents and a
// backward rule when any input requires a gradient. Graphs are confined to the
// thread that built them. Frozen (requires_grad=false) leaves are immutable
// and may be read from several threads.

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <unordered_set>
#include <utility>
#include <vector>

namespace pclprompt::ad {

using Shape = std::vector<std::size_t>;

enum class DType : std::uint32_t { F32 = 0, F64 = 1 };

template <typename T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>,
                "tensors hold f32 or f64");
  return std::is_same_v<T, float> ? DType::F32 : DType::F64;
}

enum class OpKind {
  MatMul,
  Add,
  Mul,
  Scale,
  Concat,
  Slice,
  Gather,
  Transpose,
  Reshape,
  Relu,
  Gelu,
  Softmax,
  LayerNorm,
  MaxReduce,
  TopKReduce,
  MeanReduce,
  CrossEntropyWithLogits,
  SquaredDistanceMatrix,
};

inline constexpr OpKind kAllOpKinds[] = {
    OpKind::MatMul,     OpKind::Add,        OpKind::Mul,
    OpKind::Scale,      OpKind::Concat,     OpKind::Slice,
    OpKind::Gather,     OpKind::Transpose,  OpKind::Reshape,
    OpKind::Relu,       OpKind::Gelu,       OpKind::Softmax,
    OpKind::LayerNorm,  OpKind::MaxReduce,  OpKind::TopKReduce,
    OpKind::MeanReduce, OpKind::CrossEntropyWithLogits,
    OpKind::SquaredDistanceMatrix,
};

inline std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::Concat: return "concat";
    case OpKind::Slice: return "slice";
    case OpKind::Gather: return "gather";
    case OpKind::Transpose: return "transpose";
    case OpKind::Reshape: return "reshape";
    case OpKind::Relu: return "relu";
    case OpKind::Gelu: return "gelu";
    case OpKind::Softmax: return "softmax";
    case OpKind::LayerNorm: return "layernorm";
    case OpKind::MaxReduce: return "max_reduce";
    case OpKind::TopKReduce: return "topk_reduce";
    case OpKind::MeanReduce: return "mean_reduce";
    case OpKind::CrossEntropyWithLogits: return "cross_entropy_with_logits";
    case OpKind::SquaredDistanceMatrix: return "squared_distance_matrix";
  }
  return "unknown";
}

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

class ShapeError : public std::invalid_argument {
 public:
  ShapeError(OpKind kind, const std::string& what)
      : std::invalid_argument(std::string(op_name(kind)) + ": " + what) {}
};

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
inline thread_local bool grad_enabled = true;
}

inline bool grad_enabled() { return detail::grad_enabled; }

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled) {
    detail::grad_enabled = false;
  }
  ~NoGradGuard() { detail::grad_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until a backward pass reaches this node
  bool requires_grad = false;
  std::optional<OpKind> op;  // absent for leaves
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor from_vector(Shape shape, std::vector<T> values,
                            bool requires_grad = false) {
    if (ad::numel(shape) != values.size()) {
      throw std::invalid_argument("tensor: " + std::to_string(values.size()) +
                                  " values for shape " + shape_str(shape));
    }
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor full(Shape shape, T fill, bool requires_grad = false) {
    std::vector<T> values(ad::numel(shape), fill);
    return from_vector(std::move(shape), std::move(values), requires_grad);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T(0), requires_grad);
  }

  static constexpr DType dtype() { return dtype_of<T>(); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const T> value() const { return node_->value; }
  // Mutable access is for leaves only (initialization, optimizer updates).
  std::span<T> data() {
    if (node_->op) throw GraphError("data(): tensor is not a leaf");
    return node_->value;
  }
  std::span<const T> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) {
    if (node_->op) throw GraphError("set_requires_grad(): tensor is not a leaf");
    node_->requires_grad = flag;
    if (!flag) node_->grad.clear();
  }
  bool is_leaf() const { return !node_->op.has_value(); }
  std::optional<OpKind> op() const { return node_->op; }

  T item() const {
    if (numel() != 1) {
      throw std::invalid_argument("item(): tensor has shape " + shape_str(shape()));
    }
    return node_->value[0];
  }

  // New leaf holding a copy of the current values.
  Tensor detach(bool requires_grad = false) const {
    return from_vector(shape(), node_->value, requires_grad);
  }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Attribute bag for the generic dispatcher and the finite-difference check.
struct OpAttrs {
  std::size_t axis = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t k = 1;
  double eps = 1e-5;
  double factor = 1.0;
  std::size_t label = 0;
  std::vector<std::size_t> indices;
  Shape shape;
};

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
Tensor<T> make_result(OpKind kind, Shape shape, std::vector<T> value,
                      std::vector<Tensor<T>> inputs,
                      std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = kind;
  bool needs = false;
  if (ad::grad_enabled()) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const auto& in : inputs) node->parents.push_back(in.node_ptr());
    node->backward = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

struct AxisSplit {
  std::size_t outer;
  std::size_t n;
  std::size_t inner;
};

inline AxisSplit split_axis(OpKind kind, const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw ShapeError(kind, "axis " + std::to_string(axis) + " out of range for " +
                               shape_str(shape));
  }
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// b broadcasts against a when its shape, with leading unit dims stripped,
// equals the trailing dims of a.
inline bool broadcasts(const Shape& a, const Shape& b) {
  std::size_t lead = 0;
  while (lead < b.size() && b[lead] == 1 && b.size() - lead > 0) ++lead;
  Shape core(b.begin() + static_cast<std::ptrdiff_t>(lead), b.end());
  if (core.size() > a.size()) return false;
  return std::equal(core.begin(), core.end(), a.end() - static_cast<std::ptrdiff_t>(core.size()));
}

template <typename T>
void check_binary(OpKind kind, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() == b.shape()) return;
  if (!broadcasts(a.shape(), b.shape())) {
    throw ShapeError(kind, "cannot combine " + shape_str(a.shape()) + " with " +
                               shape_str(b.shape()));
  }
}

// tanh through a single exp; saturates cleanly to +-1 on overflow.
template <typename T>
T fast_tanh(T u) {
  return T(1) - T(2) / (std::exp(T(2) * u) + T(1));
}

template <typename T>
T gelu_tanh_arg(T x) {
  constexpr T c = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T a = T(0.044715);
  return fast_tanh(c * (x + a * x * x * x));
}

template <typename T>
T gelu_value(T x) {
  return T(0.5) * x * (T(1) + gelu_tanh_arg(x));
}

// Derivative given t = gelu_tanh_arg(x).
template <typename T>
T gelu_derivative(T x, T t) {
  constexpr T c = T(0.7978845608028654);
  constexpr T a = T(0.044715);
  return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * c * (T(1) + T(3) * a * x * x);
}

// Descending order, ties resolved toward the lower index.
template <typename T>
void rank_descending(const T* base, std::size_t n, std::size_t stride,
                     std::size_t keep, std::vector<std::size_t>& order) {
  order.resize(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto before = [&](std::size_t x, std::size_t y) {
    const T vx = base[x * stride];
    const T vy = base[y * stride];
    return vx > vy || (vx == vy && x < y);
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep),
                    order.end(), before);
  order.resize(keep);
}

}  // namespace detail

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError(OpKind::MatMul, "cannot multiply " + shape_str(a.shape()) +
                                         " by " + shape_str(b.shape()));
  }
  const auto n = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto m = static_cast<Eigen::Index>(b.dim(1));
  std::vector<T> out(static_cast<std::size_t>(n * m));
  detail::MapMat<T>(out.data(), n, m).noalias() =
      detail::ConstMapMat<T>(a.value().data(), n, k) *
      detail::ConstMapMat<T>(b.value().data(), k, m);
  return detail::make_result<T>(
      OpKind::MatMul, {a.dim(0), b.dim(1)}, std::move(out), {a, b},
      [n, k, m](Node<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        detail::ConstMapMat<T> g(self.grad.data(), n, m);
        if (pa.requires_grad) {
          detail::MapMat<T>(pa.grad.data(), n, k).noalias() +=
              g * detail::ConstMapMat<T>(pb.value.data(), k, m).transpose();
        }
        if (pb.requires_grad) {
          detail::MapMat<T>(pb.grad.data(), k, m).noalias() +=
              detail::ConstMapMat<T>(pa.value.data(), n, k).transpose() * g;
        }
      });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_binary(OpKind::Add, a, b);
  const std::size_t total = a.numel();
  const std::size_t period = b.numel();
  std::vector<T> out(total);
  const auto av = a.value();
  const auto bv = b.value();
  for (std::size_t o = 0; o < total; o += period) {
    for (std::size_t j = 0; j < period; ++j) out[o + j] = av[o + j] + bv[j];
  }
  return detail::make_result<T>(
      OpKind::Add, a.shape(), std::move(out), {a, b}, [total, period](Node<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
          for (std::size_t i = 0; i < total; ++i) pa.grad[i] += self.grad[i];
        }
        if (pb.requires_grad) {
          for (std::size_t o = 0; o < total; o += period) {
            for (std::size_t j = 0; j < period; ++j) pb.grad[j] += self.grad[o + j];
          }
        }
      });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_binary(OpKind::Mul, a, b);
  const std::size_t total = a.numel();
  const std::size_t period = b.numel();
  std::vector<T> out(total);
  const auto av = a.value();
  const auto bv = b.value();
  for (std::size_t o = 0; o < total; o += period) {
    for (std::size_t j = 0; j < period; ++j) out[o + j] = av[o + j] * bv[j];
  }
  return detail::make_result<T>(
      OpKind::Mul, a.shape(), std::move(out), {a, b}, [total, period](Node<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        for (std::size_t o = 0; o < total; o += period) {
          for (std::size_t j = 0; j < period; ++j) {
            if (pa.requires_grad) pa.grad[o + j] += self.grad[o + j] * pb.value[j];
            if (pb.requires_grad) pb.grad[j] += self.grad[o + j] * pa.value[o + j];
          }
        }
      });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.value().begin(), a.value().end());
  for (auto& v : out) v *= factor;
  return detail::make_result<T>(OpKind::Scale, a.shape(), std::move(out), {a},
                                [factor](Node<T>& self) {
                                  auto& pa = *self.parents[0];
                                  for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                    pa.grad[i] += self.grad[i] * factor;
                                  }
                                });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return add(a, scale(b, T(-1)));
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& inputs, std::size_t axis) {
  if (inputs.empty()) throw ShapeError(OpKind::Concat, "no inputs");
  const Shape& first = inputs.front().shape();
  if (axis >= first.size()) {
    throw ShapeError(OpKind::Concat, "axis " + std::to_string(axis) +
                                         " out of range for " + shape_str(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& t : inputs) {
    const Shape& s = t.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) {
      throw ShapeError(OpKind::Concat, "mismatched inputs " + shape_str(first) +
                                           " and " + shape_str(s) + " on axis " +
                                           std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  const auto split = detail::split_axis(OpKind::Concat, out_shape, axis);
  std::vector<std::size_t> widths;  // contiguous chunk per outer index
  for (const auto& t : inputs) widths.push_back(t.dim(axis) * split.inner);
  const std::size_t row = split.n * split.inner;
  std::vector<T> out(numel(out_shape));
  for (std::size_t o = 0; o < split.outer; ++o) {
    std::size_t offset = o * row;
    for (std::size_t j = 0; j < inputs.size(); ++j) {
      const T* src = inputs[j].value().data() + o * widths[j];
      std::copy(src, src + widths[j], out.begin() + static_cast<std::ptrdiff_t>(offset));
      offset += widths[j];
    }
  }
  return detail::make_result<T>(
      OpKind::Concat, out_shape, std::move(out), inputs,
      [widths, row, outer = split.outer](Node<T>& self) {
        for (std::size_t o = 0; o < outer; ++o) {
          std::size_t offset = o * row;
          for (std::size_t j = 0; j < widths.size(); ++j) {
            auto& p = *self.parents[j];
            if (p.requires_grad) {
              for (std::size_t i = 0; i < widths[j]; ++i) {
                p.grad[o * widths[j] + i] += self.grad[offset + i];
              }
            }
            offset += widths[j];
          }
        }
      });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto split = detail::split_axis(OpKind::Slice, a.shape(), axis);
  if (begin > end || end > split.n) {
    throw ShapeError(OpKind::Slice, "range [" + std::to_string(begin) + ", " +
                                        std::to_string(end) + ") invalid for " +
                                        shape_str(a.shape()) + " axis " +
                                        std::to_string(axis));
  }
  Shape out_shape = a.shape();
  out_shape[axis] = end - begin;
  const std::size_t width = (end - begin) * split.inner;
  const std::size_t row = split.n * split.inner;
  const std::size_t skip = begin * split.inner;
  std::vector<T> out(split.outer * width);
  const auto av = a.value();
  for (std::size_t o = 0; o < split.outer; ++o) {
    std::copy_n(av.data() + o * row + skip, width, out.data() + o * width);
  }
  return detail::make_result<T>(
      OpKind::Slice, out_shape, std::move(out), {a},
      [outer = split.outer, width, row, skip](Node<T>& self) {
        auto& pa = *self.parents[0];
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t i = 0; i < width; ++i) {
            pa.grad[o * row + skip + i] += self.grad[o * width + i];
          }
        }
      });
}

// Selects rows (entries along axis 0); indices may repeat.
template <typename T>
Tensor<T> gather(const Tensor<T>& a, std::vector<std::size_t> rows) {
  if (a.rank() == 0) throw ShapeError(OpKind::Gather, "scalar input");
  const std::size_t n = a.dim(0);
  const std::size_t width = n ? a.numel() / n : 0;
  for (auto r : rows) {
    if (r >= n) {
      throw ShapeError(OpKind::Gather, "row " + std::to_string(r) + " out of range for " +
                                           shape_str(a.shape()));
    }
  }
  Shape out_shape = a.shape();
  out_shape[0] = rows.size();
  std::vector<T> out(rows.size() * width);
  const auto av = a.value();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(av.data() + rows[i] * width, width, out.data() + i * width);
  }
  return detail::make_result<T>(OpKind::Gather, out_shape, std::move(out), {a},
                                [rows = std::move(rows), width](Node<T>& self) {
                                  auto& pa = *self.parents[0];
                                  for (std::size_t i = 0; i < rows.size(); ++i) {
                                    for (std::size_t j = 0; j < width; ++j) {
                                      pa.grad[rows[i] * width + j] +=
                                          self.grad[i * width + j];
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) {
    throw ShapeError(OpKind::Transpose, "needs rank 2, got " + shape_str(a.shape()));
  }
  const std::size_t r = a.dim(0);
  const std::size_t c = a.dim(1);
  std::vector<T> out(r * c);
  const auto av = a.value();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  }
  return detail::make_result<T>(OpKind::Transpose, {c, r}, std::move(out), {a},
                                [r, c](Node<T>& self) {
                                  auto& pa = *self.parents[0];
                                  for (std::size_t i = 0; i < r; ++i) {
                                    for (std::size_t j = 0; j < c; ++j) {
                                      pa.grad[i * c + j] += self.grad[j * r + i];
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw ShapeError(OpKind::Reshape, "cannot view " + shape_str(a.shape()) + " as " +
                                          shape_str(shape));
  }
  std::vector<T> out(a.value().begin(), a.value().end());
  return detail::make_result<T>(OpKind::Reshape, std::move(shape), std::move(out), {a},
                                [](Node<T>& self) {
                                  auto& pa = *self.parents[0];
                                  for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                    pa.grad[i] += self.grad[i];
                                  }
                                });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.value().begin(), a.value().end());
  for (auto& v : out) v = v > T(0) ? v : T(0);
  return detail::make_result<T>(OpKind::Relu, a.shape(), std::move(out), {a},
                                [](Node<T>& self) {
                                  auto& pa = *self.parents[0];
                                  for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                    if (pa.value[i] > T(0)) pa.grad[i] += self.grad[i];
                                  }
                                });
}

// Tanh approximation; the single formula used by forward and backward.
template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  const auto av = a.value();
  std::vector<T> out(a.numel());
  std::vector<T> tanh_part(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    tanh_part[i] = detail::gelu_tanh_arg(av[i]);
    out[i] = T(0.5) * av[i] * (T(1) + tanh_part[i]);
  }
  return detail::make_result<T>(
      OpKind::Gelu, a.shape(), std::move(out), {a},
      [tanh_part = std::move(tanh_part)](Node<T>& self) {
        auto& pa = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          pa.grad[i] += self.grad[i] * detail::gelu_derivative(pa.value[i], tanh_part[i]);
        }
      });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& a, std::size_t axis) {
  const auto s = detail::split_axis(OpKind::Softmax, a.shape(), axis);
  std::vector<T> out(a.numel());
  const auto av = a.value();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.n * s.inner + in;
      T peak = av[base];
      for (std::size_t j = 1; j < s.n; ++j) peak = std::max(peak, av[base + j * s.inner]);
      T total = 0;
      for (std::size_t j = 0; j < s.n; ++j) {
        const T e = std::exp(av[base + j * s.inner] - peak);
        out[base + j * s.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < s.n; ++j) out[base + j * s.inner] /= total;
    }
  }
  return detail::make_result<T>(
      OpKind::Softmax, a.shape(), std::move(out), {a}, [s](Node<T>& self) {
        auto& pa = *self.parents[0];
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.n * s.inner + in;
            T dot = 0;
            for (std::size_t j = 0; j < s.n; ++j) {
              const std::size_t idx = base + j * s.inner;
              dot += self.grad[idx] * self.value[idx];
            }
            for (std::size_t j = 0; j < s.n; ++j) {
              const std::size_t idx = base + j * s.inner;
              pa.grad[idx] += self.value[idx] * (self.grad[idx] - dot);
            }
          }
        }
      });
}

// Normalizes to zero mean and unit variance along axis; no affine terms.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& a, std::size_t axis, T eps = T(1e-5)) {
  const auto s = detail::split_axis(OpKind::LayerNorm, a.shape(), axis);
  std::vector<T> out(a.numel());
  std::vector<T> inv_std(s.outer * s.inner);
  const auto av = a.value();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.n * s.inner + in;
      T mean = 0;
      for (std::size_t j = 0; j < s.n; ++j) mean += av[base + j * s.inner];
      mean /= T(s.n);
      T var = 0;
      for (std::size_t j = 0; j < s.n; ++j) {
        const T c = av[base + j * s.inner] - mean;
        var += c * c;
      }
      var /= T(s.n);
      const T r = T(1) / std::sqrt(var + eps);
      inv_std[o * s.inner + in] = r;
      for (std::size_t j = 0; j < s.n; ++j) {
        out[base + j * s.inner] = (av[base + j * s.inner] - mean) * r;
      }
    }
  }
  return detail::make_result<T>(
      OpKind::LayerNorm, a.shape(), std::move(out), {a},
      [s, inv_std = std::move(inv_std)](Node<T>& self) {
        auto& pa = *self.parents[0];
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.n * s.inner + in;
            T mean_g = 0;
            T mean_gy = 0;
            for (std::size_t j = 0; j < s.n; ++j) {
              const std::size_t idx = base + j * s.inner;
              mean_g += self.grad[idx];
              mean_gy += self.grad[idx] * self.value[idx];
            }
            mean_g /= T(s.n);
            mean_gy /= T(s.n);
            const T r = inv_std[o * s.inner + in];
            for (std::size_t j = 0; j < s.n; ++j) {
              const std::size_t idx = base + j * s.inner;
              pa.grad[idx] += r * (self.grad[idx] - mean_g - self.value[idx] * mean_gy);
            }
          }
        }
      });
}

namespace detail {

// Shared by max_reduce and topk_reduce so that K=1 is bitwise identical to max.
template <typename T>
Tensor<T> select_top(OpKind kind, const Tensor<T>& a, std::size_t axis, std::size_t keep) {
  const auto s = split_axis(kind, a.shape(), axis);
  if (keep == 0 || keep > s.n) {
    throw ShapeError(kind, "K=" + std::to_string(keep) + " invalid for axis length " +
                               std::to_string(s.n));
  }
  Shape out_shape = a.shape();
  out_shape[axis] = keep;
  std::vector<T> out(s.outer * keep * s.inner);
  std::vector<std::size_t> source(out.size());
  std::vector<std::size_t> order;
  const auto av = a.value();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.n * s.inner + in;
      if (keep == 1) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < s.n; ++j) {
          if (av[base + j * s.inner] > av[base + best * s.inner]) best = j;
        }
        order.assign(1, best);
      } else {
        rank_descending(av.data() + base, s.n, s.inner, keep, order);
      }
      for (std::size_t r = 0; r < keep; ++r) {
        const std::size_t dst = o * keep * s.inner + r * s.inner + in;
        source[dst] = base + order[r] * s.inner;
        out[dst] = av[source[dst]];
      }
    }
  }
  return make_result<T>(kind, out_shape, std::move(out), {a},
                        [source = std::move(source)](Node<T>& self) {
                          auto& pa = *self.parents[0];
                          for (std::size_t i = 0; i < source.size(); ++i) {
                            pa.grad[source[i]] += self.grad[i];
                          }
                        });
}

}  // namespace detail

// Keeps the axis with length 1; ties route to the lowest index.
template <typename T>
Tensor<T> max_reduce(const Tensor<T>& a, std::size_t axis) {
  return detail::select_top(OpKind::MaxReduce, a, axis, 1);
}

// K largest along axis in descending order; ties route to the lowest index.
template <typename T>
Tensor<T> topk_reduce(const Tensor<T>& a, std::size_t axis, std::size_t k) {
  return detail::select_top(OpKind::TopKReduce, a, axis, k);
}

template <typename T>
Tensor<T> mean_reduce(const Tensor<T>& a, std::size_t axis) {
  const auto s = detail::split_axis(OpKind::MeanReduce, a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape[axis] = 1;
  std::vector<T> out(s.outer * s.inner, T(0));
  const auto av = a.value();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t j = 0; j < s.n; ++j) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        out[o * s.inner + in] += av[(o * s.n + j) * s.inner + in];
      }
    }
  }
  for (auto& v : out) v /= T(s.n);
  return detail::make_result<T>(
      OpKind::MeanReduce, out_shape, std::move(out), {a}, [s](Node<T>& self) {
        auto& pa = *self.parents[0];
        const T w = T(1) / T(s.n);
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t j = 0; j < s.n; ++j) {
            for (std::size_t in = 0; in < s.inner; ++in) {
              pa.grad[(o * s.n + j) * s.inner + in] += self.grad[o * s.inner + in] * w;
            }
          }
        }
      });
}

// Softmax cross-entropy of one logit vector (any shape with C entries).
template <typename T>
Tensor<T> cross_entropy_with_logits(const Tensor<T>& logits, std::size_t label) {
  const std::size_t c = logits.numel();
  if (label >= c) {
    throw ShapeError(OpKind::CrossEntropyWithLogits,
                     "label " + std::to_string(label) + " out of range for " +
                         shape_str(logits.shape()));
  }
  const auto lv = logits.value();
  const T peak = *std::max_element(lv.begin(), lv.end());
  T total = 0;
  for (auto v : lv) total += std::exp(v - peak);
  const T lse = peak + std::log(total);
  std::vector<T> probs(c);
  for (std::size_t i = 0; i < c; ++i) probs[i] = std::exp(lv[i] - lse);
  return detail::make_result<T>(
      OpKind::CrossEntropyWithLogits, {1}, {lse - lv[label]}, {logits},
      [probs = std::move(probs), label](Node<T>& self) {
        auto& pl = *self.parents[0];
        const T g = self.grad[0];
        for (std::size_t i = 0; i < probs.size(); ++i) {
          pl.grad[i] += g * (probs[i] - (i == label ? T(1) : T(0)));
        }
      });
}

// out[i][j] = |a_i - b_j|^2 for row sets a (n x D) and b (r x D).
template <typename T>
Tensor<T> squared_distance_matrix(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw ShapeError(OpKind::SquaredDistanceMatrix,
                     "row sets " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " differ in width");
  }
  const std::size_t n = a.dim(0);
  const std::size_t r = b.dim(0);
  const std::size_t d = a.dim(1);
  std::vector<T> out(n * r);
  const auto av = a.value();
  const auto bv = b.value();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < r; ++j) {
      T acc = 0;
      for (std::size_t c = 0; c < d; ++c) {
        const T diff = av[i * d + c] - bv[j * d + c];
        acc += diff * diff;
      }
      out[i * r + j] = acc;
    }
  }
  return detail::make_result<T>(
      OpKind::SquaredDistanceMatrix, {n, r}, std::move(out), {a, b},
      [n, r, d](Node<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < r; ++j) {
            const T g = T(2) * self.grad[i * r + j];
            if (g == T(0)) continue;
            for (std::size_t c = 0; c < d; ++c) {
              const T diff = pa.value[i * d + c] - pb.value[j * d + c];
              if (pa.requires_grad) pa.grad[i * d + c] += g * diff;
              if (pb.requires_grad) pb.grad[j * d + c] -= g * diff;
            }
          }
        }
      });
}

// Convenience compositions.

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  const auto n = a.numel();
  return scale(mean_reduce(reshape(a, {n}), 0), T(n));
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
  return mean_reduce(reshape(a, {a.numel()}), 0);
}

// Dispatches by kind; used by the finite-difference oracle and the
// op-coverage tests.
template <typename T>
Tensor<T> apply(OpKind kind, const std::vector<Tensor<T>>& in, const OpAttrs& at) {
  auto need = [&](std::size_t count) {
    if (in.size() != count) {
      throw ShapeError(kind, "expected " + std::to_string(count) + " inputs, got " +
                                 std::to_string(in.size()));
    }
  };
  switch (kind) {
    case OpKind::MatMul: need(2); return matmul(in[0], in[1]);
    case OpKind::Add: need(2); return add(in[0], in[1]);
    case OpKind::Mul: need(2); return mul(in[0], in[1]);
    case OpKind::Scale: need(1); return scale(in[0], static_cast<T>(at.factor));
    case OpKind::Concat: return concat(in, at.axis);
    case OpKind::Slice: need(1); return slice(in[0], at.axis, at.begin, at.end);
    case OpKind::Gather: need(1); return gather(in[0], at.indices);
    case OpKind::Transpose: need(1); return transpose(in[0]);
    case OpKind::Reshape: need(1); return reshape(in[0], at.shape);
    case OpKind::Relu: need(1); return relu(in[0]);
    case OpKind::Gelu: need(1); return gelu(in[0]);
    case OpKind::Softmax: need(1); return softmax(in[0], at.axis);
    case OpKind::LayerNorm: need(1); return layer_norm(in[0], at.axis, static_cast<T>(at.eps));
    case OpKind::MaxReduce: need(1); return max_reduce(in[0], at.axis);
    case OpKind::TopKReduce: need(1); return topk_reduce(in[0], at.axis, at.k);
    case OpKind::MeanReduce: need(1); return mean_reduce(in[0], at.axis);
    case OpKind::CrossEntropyWithLogits: need(1); return cross_entropy_with_logits(in[0], at.label);
    case OpKind::SquaredDistanceMatrix: need(2); return squared_distance_matrix(in[0], in[1]);
  }
  throw ShapeError(kind, "unhandled kind");
}

// Accumulates d(loss)/d(leaf) into every reachable leaf that requires grad and
// returns those leaves in discovery order. Interior gradients are scratch and
// are released afterwards, so repeated calls add up on leaves only.
template <typename T>
std::vector<Tensor<T>> backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) {
    throw GraphError("backward(): loss must be scalar, got shape " +
                     shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw GraphError("backward(): no leaf requiring grad is reachable from the loss");
  }
  // Iterative post-order DFS yields a topological order (parents first).
  std::vector<Node<T>*> order;
  std::vector<std::shared_ptr<Node<T>>> leaves;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }
  for (Node<T>* node : order) {
    if (node->op) {
      node->grad.assign(node->value.size(), T(0));
    } else {
      node->ensure_grad();
    }
  }
  loss.node()->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward) node->backward(*node);
  }
  std::vector<Tensor<T>> reached;
  for (Node<T>* node : order) {
    if (node->op) {
      std::vector<T>().swap(node->grad);
    }
  }
  // Recover owning handles for the leaves (parents hold them).
  for (Node<T>* node : order) {
    for (const auto& p : node->parents) {
      if (!p->op && p->requires_grad &&
          std::find_if(reached.begin(), reached.end(),
                       [&](const Tensor<T>& t) { return t.node() == p.get(); }) ==
              reached.end()) {
        reached.emplace_back(p);
      }
    }
  }
  if (!loss.node()->op) reached.insert(reached.begin(), loss);
  return reached;
}

// Max over all entries of |analytic - central difference| / max(1, |analytic|)
// for the scalar L = sum(w * op(inputs)) with fixed pseudo-random weights w.
// Entries of `inputs` flagged in `constant` are held fixed.
inline double finite_diff_check(OpKind kind, const std::vector<Tensor<double>>& inputs,
                                const OpAttrs& attrs, double h = 1e-6,
                                std::vector<bool> constant = {}) {
  constant.resize(inputs.size(), false);
  std::vector<Tensor<double>> leaves;
  leaves.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    leaves.push_back(inputs[i].detach(!constant[i]));
  }
  const auto probe = apply(kind, leaves, attrs);
  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> weights(probe.numel());
  for (auto& w : weights) w = dist(rng);
  const auto weight_tensor = Tensor<double>::from_vector(probe.shape(), weights);

  auto objective = [&](const std::vector<Tensor<double>>& args) {
    NoGradGuard guard;
    const auto y = apply(kind, args, attrs);
    double total = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) total += weights[i] * y.value()[i];
    return total;
  };

  bool any = false;
  for (const auto& l : leaves) any = any || l.requires_grad();
  if (!any) return 0.0;
  backward(sum_all(mul(probe, weight_tensor)));

  double worst = 0.0;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    if (constant[i]) continue;
    for (std::size_t j = 0; j < leaves[i].numel(); ++j) {
      const double analytic = leaves[i].grad()[j];
      auto args = leaves;
      auto up = leaves[i].detach();
      auto down = leaves[i].detach();
      up.data()[j] += h;
      down.data()[j] -= h;
      args[i] = up;
      const double f_up = objective(args);
      args[i] = down;
      const double f_down = objective(args);
      const double numeric = (f_up - f_down) / (2 * h);
      worst = std::max(worst, std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic)));
    }
  }
  return worst;
}

}  // namespace pclprompt::ad
