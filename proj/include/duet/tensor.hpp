// Copyright 2026 The Duet Authors. All Rights Reserved.
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

// Dense float64 tensors and the deterministic kernel set shared by the
// interpreter and the graph runner.

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#if defined(__linux__)
#include <sys/prctl.h>
#endif

#include "duet/error.hpp"

namespace duet {

using Shape = std::vector<std::int64_t>;

inline std::int64_t num_elements(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

inline std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() : data(1, 0.0) {}
  Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<std::int64_t>(data.size()) != num_elements(shape)) {
      fail(ErrorCode::kShapeMismatch, "tensor data length " + std::to_string(data.size()) +
                                          " does not match shape " + shape_to_string(shape));
    }
  }

  static Tensor scalar(double v) { return Tensor({}, {v}); }
  static Tensor filled(Shape s, double v) {
    auto n = static_cast<std::size_t>(num_elements(s));
    return Tensor(std::move(s), std::vector<double>(n, v));
  }

  std::size_t rank() const { return shape.size(); }
  std::size_t size() const { return data.size(); }

  // Bitwise comparison: distinguishes -0.0 from 0.0 and equates identical NaNs.
  bool bitwise_equal(const Tensor& other) const {
    if (shape != other.shape || data.size() != other.data.size()) return false;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (std::bit_cast<std::uint64_t>(data[i]) != std::bit_cast<std::uint64_t>(other.data[i]))
        return false;
    }
    return true;
  }
};

enum class OpKind : std::uint8_t {
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kNeg,
  kRelu,
  kSigmoid,
  kSum,
  kMean,
  kTranspose,
  kReshape,
  kFill,
  kReadVar,
  kAssignVar,
};

inline constexpr std::array<OpKind, 14> kAllOpKinds = {
    OpKind::kMatMul,  OpKind::kAdd,       OpKind::kSub,     OpKind::kMul,  OpKind::kNeg,
    OpKind::kRelu,    OpKind::kSigmoid,   OpKind::kSum,     OpKind::kMean, OpKind::kTranspose,
    OpKind::kReshape, OpKind::kFill,      OpKind::kReadVar, OpKind::kAssignVar,
};

inline std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kMatMul: return "MatMul";
    case OpKind::kAdd: return "Add";
    case OpKind::kSub: return "Sub";
    case OpKind::kMul: return "Mul";
    case OpKind::kNeg: return "Neg";
    case OpKind::kRelu: return "Relu";
    case OpKind::kSigmoid: return "Sigmoid";
    case OpKind::kSum: return "Sum";
    case OpKind::kMean: return "Mean";
    case OpKind::kTranspose: return "Transpose";
    case OpKind::kReshape: return "Reshape";
    case OpKind::kFill: return "Fill";
    case OpKind::kReadVar: return "ReadVar";
    case OpKind::kAssignVar: return "AssignVar";
  }
  return "?";
}

inline std::optional<OpKind> op_from_name(std::string_view name) {
  for (auto k : kAllOpKinds) {
    if (op_name(k) == name) return k;
  }
  return std::nullopt;
}

inline std::size_t op_arity(OpKind kind) {
  switch (kind) {
    case OpKind::kMatMul:
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul:
      return 2;
    case OpKind::kFill:
    case OpKind::kReadVar:
      return 0;
    default:
      return 1;
  }
}

// Static attribute value. Floats compare by bit pattern so that attribute
// equality never merges values that produce different outputs (0.0 / -0.0).
class AttrValue {
 public:
  using Storage = std::variant<std::int64_t, double, std::string, Shape>;

  AttrValue() = default;
  AttrValue(std::int64_t v) : value_(v) {}
  AttrValue(int v) : value_(static_cast<std::int64_t>(v)) {}
  AttrValue(double v) : value_(v) {}
  AttrValue(std::string v) : value_(std::move(v)) {}
  AttrValue(const char* v) : value_(std::string(v)) {}
  AttrValue(Shape v) : value_(std::move(v)) {}

  const Storage& storage() const { return value_; }

  template <typename T>
  const T* get_if() const { return std::get_if<T>(&value_); }

  std::strong_ordering operator<=>(const AttrValue& other) const {
    if (value_.index() != other.value_.index()) return value_.index() <=> other.value_.index();
    if (auto d = std::get_if<double>(&value_)) {
      return std::bit_cast<std::uint64_t>(*d) <=>
             std::bit_cast<std::uint64_t>(std::get<double>(other.value_));
    }
    if (auto i = std::get_if<std::int64_t>(&value_)) return *i <=> std::get<std::int64_t>(other.value_);
    if (auto s = std::get_if<std::string>(&value_)) return *s <=> std::get<std::string>(other.value_);
    return std::get<Shape>(value_) <=> std::get<Shape>(other.value_);
  }
  bool operator==(const AttrValue& other) const { return (*this <=> other) == 0; }

 private:
  Storage value_{std::int64_t{0}};
};

// std::map keeps keys sorted, so map equality is equality of the sorted
// key/value sequences.
using Attrs = std::map<std::string, AttrValue>;

std::string format_number(double v);

inline std::string attr_to_string(const AttrValue& v) {
  if (auto i = v.get_if<std::int64_t>()) return std::to_string(*i);
  if (auto d = v.get_if<double>()) return format_number(*d);
  if (auto s = v.get_if<std::string>()) return *s;
  return shape_to_string(*v.get_if<Shape>());
}

inline std::string attrs_to_string(const Attrs& attrs) {
  std::string out;
  for (const auto& [k, v] : attrs) {
    if (!out.empty()) out += ",";
    out += k + "=" + attr_to_string(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape inference.

using VarShapes = std::map<std::string, Shape, std::less<>>;

namespace detail {

template <typename T>
const T& require_attr(const Attrs& attrs, const std::string& name, OpKind kind) {
  auto it = attrs.find(name);
  if (it == attrs.end() || !it->second.get_if<T>()) {
    fail(ErrorCode::kBadAttrs, std::string(op_name(kind)) + " requires attribute '" + name + "'");
  }
  return *it->second.get_if<T>();
}

inline void check_permutation(const Shape& perm, std::size_t rank) {
  if (perm.size() != rank) {
    fail(ErrorCode::kBadAttrs, "Transpose perm " + shape_to_string(perm) + " has wrong length for rank " +
                                   std::to_string(rank));
  }
  std::vector<bool> seen(rank, false);
  for (auto p : perm) {
    if (p < 0 || p >= static_cast<std::int64_t>(rank) || seen[p]) {
      fail(ErrorCode::kBadAttrs, "Transpose perm " + shape_to_string(perm) + " is not a permutation");
    }
    seen[p] = true;
  }
}

inline void check_shape_attr(const Shape& s, OpKind kind) {
  for (auto d : s) {
    if (d < 0) fail(ErrorCode::kBadAttrs, std::string(op_name(kind)) + " negative dimension in " + shape_to_string(s));
  }
}

}  // namespace detail

// `vars` is consulted only for ReadVar, whose output shape is the current
// shape of the variable.
inline std::vector<Shape> infer_shape(OpKind kind, const Attrs& attrs, std::span<const Shape> inputs,
                                      const VarShapes* vars = nullptr) {
  if (inputs.size() != op_arity(kind)) {
    fail(ErrorCode::kShapeMismatch, std::string(op_name(kind)) + " expects " + std::to_string(op_arity(kind)) +
                                        " inputs, got " + std::to_string(inputs.size()));
  }
  switch (kind) {
    case OpKind::kMatMul: {
      const auto& a = inputs[0];
      const auto& b = inputs[1];
      if (a.size() != 2 || b.size() != 2 || a[1] != b[0]) {
        fail(ErrorCode::kShapeMismatch,
             "MatMul shapes " + shape_to_string(a) + " x " + shape_to_string(b) + " are incompatible");
      }
      return {Shape{a[0], b[1]}};
    }
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul: {
      const auto& a = inputs[0];
      const auto& b = inputs[1];
      if (a == b) return {a};
      if (a.empty()) return {b};
      if (b.empty()) return {a};
      fail(ErrorCode::kShapeMismatch, std::string(op_name(kind)) + " shapes " + shape_to_string(a) + " and " +
                                          shape_to_string(b) + " do not broadcast");
    }
    case OpKind::kNeg:
    case OpKind::kRelu:
    case OpKind::kSigmoid:
    case OpKind::kAssignVar:
      return {inputs[0]};
    case OpKind::kSum:
    case OpKind::kMean:
      return {Shape{}};
    case OpKind::kTranspose: {
      const auto& perm = detail::require_attr<Shape>(attrs, "perm", kind);
      detail::check_permutation(perm, inputs[0].size());
      Shape out(perm.size());
      for (std::size_t i = 0; i < perm.size(); ++i) out[i] = inputs[0][perm[i]];
      return {out};
    }
    case OpKind::kReshape: {
      const auto& target = detail::require_attr<Shape>(attrs, "target_shape", kind);
      detail::check_shape_attr(target, kind);
      if (num_elements(target) != num_elements(inputs[0])) {
        fail(ErrorCode::kBadAttrs, "Reshape target " + shape_to_string(target) + " size differs from input " +
                                       shape_to_string(inputs[0]));
      }
      return {target};
    }
    case OpKind::kFill: {
      const auto& s = detail::require_attr<Shape>(attrs, "shape", kind);
      detail::check_shape_attr(s, kind);
      return {s};
    }
    case OpKind::kReadVar: {
      const auto& name = detail::require_attr<std::string>(attrs, "var_name", kind);
      if (!vars) fail(ErrorCode::kBadAttrs, "ReadVar shape needs the variable store");
      auto it = vars->find(name);
      if (it == vars->end()) fail(ErrorCode::kBadAttrs, "ReadVar of unknown variable '" + name + "'");
      return {it->second};
    }
  }
  fail(ErrorCode::kInternal, "unhandled op kind");
}

// ---------------------------------------------------------------------------
// Cost model.

struct KernelCost {
  double base_us = 0.0;
  double per_element_us = 0.0;
};

struct CostConfig {
  std::map<OpKind, KernelCost> per_kind;

  bool empty() const { return per_kind.empty(); }
};

inline std::chrono::nanoseconds kernel_cost(OpKind kind, std::span<const Shape> output_shapes,
                                            const CostConfig& cost) {
  auto it = cost.per_kind.find(kind);
  if (it == cost.per_kind.end()) return std::chrono::nanoseconds{0};
  std::int64_t elems = 0;
  for (const auto& s : output_shapes) elems += num_elements(s);
  double us = it->second.base_us + it->second.per_element_us * static_cast<double>(elems);
  return std::chrono::nanoseconds{static_cast<std::int64_t>(std::llround(us * 1000.0))};
}

// Lowers the calling thread's timer slack so short sleeps land close to their
// deadline. No-op off Linux.
inline void tighten_timer_slack() {
#if defined(__linux__)
  ::prctl(PR_SET_TIMERSLACK, 1UL, 0UL, 0UL, 0UL);
#endif
}

inline void emulate_latency(std::chrono::nanoseconds d) {
  if (d.count() <= 0) return;
  std::this_thread::sleep_until(std::chrono::steady_clock::now() + d);
}

// ---------------------------------------------------------------------------
// Kernels.

// Variable access for ReadVar / AssignVar. The interpreter and the graph
// runner each provide their own store.
class VarAccess {
 public:
  virtual ~VarAccess() = default;
  virtual const Tensor& read(const std::string& name) = 0;
  virtual void write(const std::string& name, const Tensor& value) = 0;
};

namespace detail {

template <typename F>
Tensor elementwise_binary(const Tensor& a, const Tensor& b, const Shape& out_shape, F f) {
  std::vector<double> out(static_cast<std::size_t>(num_elements(out_shape)));
  const bool a_scalar = a.rank() == 0 && out_shape.size() != 0;
  const bool b_scalar = b.rank() == 0 && out_shape.size() != 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    double x = a_scalar ? a.data[0] : a.data[i];
    double y = b_scalar ? b.data[0] : b.data[i];
    out[i] = f(x, y);
  }
  return Tensor(out_shape, std::move(out));
}

template <typename F>
Tensor elementwise_unary(const Tensor& a, F f) {
  std::vector<double> out(a.data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a.data[i]);
  return Tensor(a.shape, std::move(out));
}

inline Tensor transpose(const Tensor& a, const Shape& perm, const Shape& out_shape) {
  const std::size_t rank = a.rank();
  std::vector<std::int64_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * a.shape[i];
  std::vector<double> out(a.data.size());
  std::vector<std::int64_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < out.size(); ++flat) {
    std::int64_t src = 0;
    for (std::size_t d = 0; d < rank; ++d) src += idx[d] * in_strides[perm[d]];
    out[flat] = a.data[static_cast<std::size_t>(src)];
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
    }
  }
  return Tensor(out_shape, std::move(out));
}

}  // namespace detail

// Kernel computation only; execute_kernel adds the emulated latency.
inline std::vector<Tensor> compute_kernel(OpKind kind, const Attrs& attrs, std::span<const Tensor> inputs,
                                          VarAccess* vars = nullptr) {
  std::vector<Shape> in_shapes;
  in_shapes.reserve(inputs.size());
  for (const auto& t : inputs) in_shapes.push_back(t.shape);

  std::vector<Shape> out_shapes;
  if (kind == OpKind::kReadVar) {
    if (!vars) fail(ErrorCode::kBadAttrs, "ReadVar needs a variable store");
    if (!inputs.empty()) fail(ErrorCode::kShapeMismatch, "ReadVar takes no inputs");
    const auto& name = detail::require_attr<std::string>(attrs, "var_name", kind);
    Tensor value = vars->read(name);
    return {std::move(value)};
  }
  out_shapes = infer_shape(kind, attrs, in_shapes);
  const Shape& out_shape = out_shapes[0];

  Tensor result;
  switch (kind) {
    case OpKind::kMatMul: {
      const auto& a = inputs[0];
      const auto& b = inputs[1];
      const auto m = a.shape[0], k = a.shape[1], n = b.shape[1];
      std::vector<double> c(static_cast<std::size_t>(m * n), 0.0);
      // i-k-j order; each c[i][j] accumulates over k sequentially.
      for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t kk = 0; kk < k; ++kk) {
          const double aik = a.data[i * k + kk];
          for (std::int64_t j = 0; j < n; ++j) c[i * n + j] += aik * b.data[kk * n + j];
        }
      }
      result = Tensor(out_shape, std::move(c));
      break;
    }
    case OpKind::kAdd:
      result = detail::elementwise_binary(inputs[0], inputs[1], out_shape, [](double x, double y) { return x + y; });
      break;
    case OpKind::kSub:
      result = detail::elementwise_binary(inputs[0], inputs[1], out_shape, [](double x, double y) { return x - y; });
      break;
    case OpKind::kMul:
      result = detail::elementwise_binary(inputs[0], inputs[1], out_shape, [](double x, double y) { return x * y; });
      break;
    case OpKind::kNeg:
      result = detail::elementwise_unary(inputs[0], [](double x) { return -x; });
      break;
    case OpKind::kRelu:
      result = detail::elementwise_unary(inputs[0], [](double x) { return x > 0.0 ? x : 0.0; });
      break;
    case OpKind::kSigmoid:
      result = detail::elementwise_unary(inputs[0], [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
      break;
    case OpKind::kSum:
    case OpKind::kMean: {
      double acc = 0.0;
      for (double x : inputs[0].data) acc += x;
      if (kind == OpKind::kMean) acc /= static_cast<double>(inputs[0].data.size());
      result = Tensor::scalar(acc);
      break;
    }
    case OpKind::kTranspose:
      result = detail::transpose(inputs[0], *attrs.at("perm").get_if<Shape>(), out_shape);
      break;
    case OpKind::kReshape:
      result = Tensor(out_shape, inputs[0].data);
      break;
    case OpKind::kFill: {
      auto it = attrs.find("value");
      double v = 0.0;
      if (it != attrs.end()) {
        if (auto d = it->second.get_if<double>()) v = *d;
        else if (auto i = it->second.get_if<std::int64_t>()) v = static_cast<double>(*i);
        else fail(ErrorCode::kBadAttrs, "Fill value must be numeric");
      }
      result = Tensor::filled(out_shape, v);
      break;
    }
    case OpKind::kAssignVar: {
      if (!vars) fail(ErrorCode::kBadAttrs, "AssignVar needs a variable store");
      const auto& name = detail::require_attr<std::string>(attrs, "var_name", kind);
      vars->write(name, inputs[0]);
      result = inputs[0];
      break;
    }
    case OpKind::kReadVar:
      break;
  }
  return {std::move(result)};
}

inline std::chrono::nanoseconds kernel_cost(OpKind kind, const std::vector<Tensor>& outputs, const CostConfig& cost) {
  std::vector<Shape> shapes;
  for (const auto& t : outputs) shapes.push_back(t.shape);
  return kernel_cost(kind, shapes, cost);
}

inline std::vector<Tensor> execute_kernel(OpKind kind, const Attrs& attrs, std::span<const Tensor> inputs,
                                          const CostConfig& cost = {}, VarAccess* vars = nullptr) {
  auto out = compute_kernel(kind, attrs, inputs, vars);
  emulate_latency(kernel_cost(kind, out, cost));
  return out;
}

// ---------------------------------------------------------------------------
// Formatting. Numbers use the shortest decimal that round-trips.

inline std::string format_number(double v) {
  if (std::isnan(v)) return std::signbit(v) ? "-nan" : "nan";
  if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline void format_tensor_dim(const Tensor& t, std::size_t dim, std::size_t& offset, std::string& out) {
  if (dim == t.rank()) {
    out += format_number(t.data[offset++]);
    return;
  }
  out += "[";
  for (std::int64_t i = 0; i < t.shape[dim]; ++i) {
    if (i) out += ", ";
    format_tensor_dim(t, dim + 1, offset, out);
  }
  out += "]";
}

}  // namespace detail

inline std::string format_tensor(const Tensor& t) {
  std::string out;
  std::size_t offset = 0;
  detail::format_tensor_dim(t, 0, offset, out);
  return out;
}

}  // namespace duet
