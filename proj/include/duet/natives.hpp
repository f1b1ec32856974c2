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

// Fixed native-function registry. Natives stand in for arbitrary host
// library calls and must be deterministic in (name, args, step) so a
// replayed step reproduces the aborted attempt exactly.

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "duet/error.hpp"
#include "duet/prng.hpp"
#include "duet/value.hpp"

namespace duet {

struct NativeInfo {
  std::string_view name;
  std::size_t arity;
  std::string_view doc;
};

inline constexpr NativeInfo kNatives[] = {
    {"coin", 1, "coin(k): bool from the native stream at index step*31+k"},
    {"choice", 2, "choice(n, k): integer in [0, n) from the native stream at index step*31+k"},
    {"clip", 3, "clip(xs, lo, hi): clamp a number or list elementwise"},
    {"len", 1, "len(xs): list length (1 for numbers)"},
    {"step", 0, "step(): index of the current training step"},
    {"work", 1, "work(us): busy host computation for `us` microseconds, returns none"},
};

inline const NativeInfo* find_native(std::string_view name) {
  for (const auto& n : kNatives) {
    if (n.name == name) return &n;
  }
  return nullptr;
}

struct NativeContext {
  std::uint64_t seed = 0;
  std::int64_t step = 0;
};

inline constexpr std::string_view kNativeStream = "native";

namespace detail {

inline double native_number(const Value& v, std::string_view native, int pos) {
  if (auto d = std::get_if<double>(&v)) return *d;
  if (auto b = std::get_if<bool>(&v)) return *b ? 1.0 : 0.0;
  fail(ErrorCode::kNativeFailure, std::string(native) + ": argument " + std::to_string(pos) + " must be a number, got " +
                                      std::string(value_type_name(v)));
}

inline std::int64_t native_int(const Value& v, std::string_view native, int pos) {
  double d = native_number(v, native, pos);
  if (d != std::floor(d)) fail(ErrorCode::kNativeFailure, std::string(native) + ": argument must be an integer");
  return static_cast<std::int64_t>(d);
}

inline double native_draw(const NativeContext& ctx, std::int64_t k) {
  std::int64_t index = ctx.step * 31 + k;
  if (index < 0) fail(ErrorCode::kNativeFailure, "negative native stream index");
  return stream_draw(ctx.seed, kNativeStream, static_cast<std::uint64_t>(index));
}

inline void busy_wait(std::chrono::nanoseconds d) {
  auto until = std::chrono::steady_clock::now() + d;
  while (std::chrono::steady_clock::now() < until) {
  }
}

}  // namespace detail

// Arguments must be host values; callers materialize tensors first.
inline Value eval_native(std::string_view name, std::span<const Value> args, const NativeContext& ctx) {
  const NativeInfo* info = find_native(name);
  if (!info) fail(ErrorCode::kUnknownNative, "unknown native '" + std::string(name) + "'");
  if (args.size() != info->arity) {
    fail(ErrorCode::kNativeArity, "native " + std::string(name) + " expects " + std::to_string(info->arity) +
                                      " arguments, got " + std::to_string(args.size()));
  }
  for (const auto& a : args) {
    if (auto t = std::get_if<TensorRef>(&a); t && !t->value) {
      fail(ErrorCode::kInternal, "native received an unmaterialized tensor");
    }
  }
  if (name == "coin") {
    return detail::native_draw(ctx, detail::native_int(args[0], name, 0)) >= 0.5;
  }
  if (name == "choice") {
    auto n = detail::native_int(args[0], name, 0);
    if (n <= 0) fail(ErrorCode::kNativeFailure, "choice: n must be positive");
    double u = detail::native_draw(ctx, detail::native_int(args[1], name, 1));
    return std::floor(u * static_cast<double>(n));
  }
  if (name == "step") return static_cast<double>(ctx.step);
  if (name == "work") {
    double us = detail::native_number(args[0], name, 0);
    detail::busy_wait(std::chrono::nanoseconds(static_cast<std::int64_t>(us * 1000.0)));
    return None{};
  }

  // clip / len also accept tensors (already materialized) as flat lists.
  auto as_list = [&](const Value& v, int pos) -> std::optional<std::vector<double>> {
    if (auto l = std::get_if<NumList>(&v)) return l->items;
    if (auto t = std::get_if<TensorRef>(&v)) return t->value->data;
    (void)pos;
    return std::nullopt;
  };
  if (name == "len") {
    if (auto l = as_list(args[0], 0)) return static_cast<double>(l->size());
    if (std::holds_alternative<std::string>(args[0])) return static_cast<double>(std::get<std::string>(args[0]).size());
    detail::native_number(args[0], name, 0);
    return 1.0;
  }
  // clip
  double lo = detail::native_number(args[1], name, 1);
  double hi = detail::native_number(args[2], name, 2);
  auto clamp = [&](double x) { return x < lo ? lo : (x > hi ? hi : x); };
  if (auto l = as_list(args[0], 0)) {
    NumList out;
    out.items.reserve(l->size());
    for (double x : *l) out.items.push_back(clamp(x));
    return out;
  }
  return clamp(detail::native_number(args[0], name, 0));
}

}  // namespace duet
