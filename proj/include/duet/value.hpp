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

// Host-side runtime values of the mini language.

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "duet/tensor.hpp"

namespace duet {

using HandleId = std::int64_t;
using TensorPtr = std::shared_ptr<const Tensor>;

// A tensor as seen by host code. `value` is null for an unmaterialized
// skeleton handle; `shape` is always known. `handle` is set for outputs of
// operations issued during the current step.
struct TensorRef {
  std::shared_ptr<const Tensor> value;
  Shape shape;
  std::optional<HandleId> handle;
};

struct NumList {
  std::vector<double> items;
  bool operator==(const NumList&) const = default;
};

struct None {
  bool operator==(const None&) const = default;
};

using Value = std::variant<None, double, bool, std::string, NumList, TensorRef>;

inline std::string_view value_type_name(const Value& v) {
  switch (v.index()) {
    case 0: return "none";
    case 1: return "number";
    case 2: return "bool";
    case 3: return "string";
    case 4: return "list";
    default: return "tensor";
  }
}

inline bool is_tensor(const Value& v) { return std::holds_alternative<TensorRef>(v); }

// Formats a host value. Tensors must already be materialized.
inline std::string format_value(const Value& v) {
  if (std::holds_alternative<None>(v)) return "none";
  if (auto d = std::get_if<double>(&v)) return format_number(*d);
  if (auto b = std::get_if<bool>(&v)) return *b ? "true" : "false";
  if (auto s = std::get_if<std::string>(&v)) return *s;
  if (auto l = std::get_if<NumList>(&v)) {
    std::string out = "[";
    for (std::size_t i = 0; i < l->items.size(); ++i) {
      if (i) out += ", ";
      out += format_number(l->items[i]);
    }
    return out + "]";
  }
  const auto& t = std::get<TensorRef>(v);
  if (!t.value) fail(ErrorCode::kInternal, "formatting an unmaterialized tensor");
  return format_tensor(*t.value);
}

// item(): rank-0 / single element tensors become numbers, others flat lists.
inline Value tensor_to_host(const Tensor& t) {
  if (t.rank() == 0) return t.data[0];
  return NumList{t.data};
}

}  // namespace duet
