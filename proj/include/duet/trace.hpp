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

// Per-step operation traces.

#pragma once

#include <compare>
#include <cstdint>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "duet/error.hpp"
#include "duet/frontend.hpp"
#include "duet/tensor.hpp"
#include "duet/value.hpp"

namespace duet {

// Identifies an external input position: (statement, op site, input index).
struct FeedSlot {
  StmtId stmt_id = -1;
  int site = 0;
  int input = 0;

  auto operator<=>(const FeedSlot&) const = default;
};

inline std::string feed_slot_to_string(const FeedSlot& f) {
  return "f" + std::to_string(f.stmt_id) + "." + std::to_string(f.site) + "." + std::to_string(f.input);
}

struct HandleRef {
  HandleId id = 0;
  bool operator==(const HandleRef&) const = default;
};
struct ExternalRef {
  FeedSlot slot;
  bool operator==(const ExternalRef&) const = default;
};
using ValueRef = std::variant<HandleRef, ExternalRef>;

struct OpEvent {
  OpKind kind = OpKind::kAdd;
  Attrs attrs;
  SourceLoc loc;
  std::vector<ValueRef> inputs;
  std::vector<HandleId> outputs;
  bool fetch_after = false;
};

struct LoopEnter {
  LoopId loop = -1;
};
struct LoopIterStart {
  LoopId loop = -1;
};
struct LoopExit {
  LoopId loop = -1;
};
struct StepEnd {};

using TraceEvent = std::variant<OpEvent, LoopEnter, LoopIterStart, LoopExit, StepEnd>;

struct Trace {
  std::vector<TraceEvent> events;

  std::size_t op_count() const {
    std::size_t n = 0;
    for (const auto& e : events) n += std::holds_alternative<OpEvent>(e);
    return n;
  }
};

// Checks marker balance, handle scoping and the trailing StepEnd.
inline void validate_trace(const Trace& trace) {
  auto bad = [](const std::string& msg) { fail(ErrorCode::kMalformedTrace, msg); };
  if (trace.events.empty() || !std::holds_alternative<StepEnd>(trace.events.back())) bad("trace must end with StepEnd");
  std::vector<LoopId> open;
  std::vector<bool> iterating;
  std::set<HandleId> defined;
  for (std::size_t i = 0; i < trace.events.size(); ++i) {
    const auto& ev = trace.events[i];
    if (auto op = std::get_if<OpEvent>(&ev)) {
      if (!open.empty() && !iterating.back()) bad("op inside a loop before its first iteration marker");
      if (op->inputs.size() != op_arity(op->kind)) bad("op input count does not match its kind");
      for (const auto& in : op->inputs) {
        if (auto h = std::get_if<HandleRef>(&in); h && !defined.count(h->id)) {
          bad("handle " + std::to_string(h->id) + " used before definition");
        }
      }
      if (op->outputs.size() != 1) bad("ops produce exactly one output");
      for (auto h : op->outputs) {
        if (!defined.insert(h).second) bad("handle " + std::to_string(h) + " defined twice");
      }
    } else if (auto e = std::get_if<LoopEnter>(&ev)) {
      if (!open.empty() && !iterating.back()) bad("loop entered before the enclosing loop's first iteration");
      open.push_back(e->loop);
      iterating.push_back(false);
    } else if (auto s = std::get_if<LoopIterStart>(&ev)) {
      if (open.empty() || open.back() != s->loop) bad("iteration marker outside its loop");
      iterating.back() = true;
    } else if (auto x = std::get_if<LoopExit>(&ev)) {
      if (open.empty() || open.back() != x->loop) bad("unbalanced loop exit");
      open.pop_back();
      iterating.pop_back();
    } else {
      if (i + 1 != trace.events.size()) bad("StepEnd before the end of the trace");
      if (!open.empty()) bad("unclosed loop at StepEnd");
    }
  }
}

}  // namespace duet
