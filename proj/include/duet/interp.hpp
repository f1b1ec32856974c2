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

// Tree-walking interpreter for the mini language. The evaluation logic is
// shared; a Backend decides what an operation call does: run the kernel
// (imperative, optionally recording a trace) or hand out an empty handle
// and follow the TraceGraph (skeleton).

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "duet/dataset.hpp"
#include "duet/error.hpp"
#include "duet/frontend.hpp"
#include "duet/graph_runner.hpp"
#include "duet/natives.hpp"
#include "duet/trace.hpp"
#include "duet/trace_graph.hpp"
#include "duet/value.hpp"

namespace duet {

using Env = std::map<std::string, Value>;

struct RunResult {
  std::vector<std::string> lines;
  VarMap vars;
  std::vector<double> step_ms;
};

// Everything that survives a step boundary. Copying it is the snapshot used
// for replay (tensors are immutable and shared).
struct ExecState {
  const Program* program = nullptr;
  Env globals;  // prologue bindings other than vars
  VarMap vars;
  VarShapes var_shapes;
  std::int64_t step = 0;
  Dataset dataset = Dataset::synthetic(0);
  std::uint64_t seed = 0;

  void sync_var_shapes() {
    var_shapes.clear();
    for (const auto& [k, v] : vars) var_shapes[k] = v.shape;
  }
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual TensorRef op(OpKind kind, Attrs attrs, const SourceLoc& loc, std::vector<TensorRef> inputs) = 0;
  virtual TensorPtr materialize(const TensorRef& t) = 0;
  virtual void loop_enter(LoopId) {}
  virtual void loop_iter(LoopId) {}
  virtual void loop_exit(LoopId) {}
  virtual void print(std::string line) = 0;
};

inline FeedSlot feed_slot(const SourceLoc& loc, std::size_t input) {
  return FeedSlot{loc.stmt_id, loc.site, static_cast<int>(input)};
}

// Store adapter so kernels can read and write the state's variables.
class StateVars : public VarAccess {
 public:
  explicit StateVars(ExecState& st) : st_(st) {}
  const Tensor& read(const std::string& name) override {
    auto it = st_.vars.find(name);
    if (it == st_.vars.end()) fail(ErrorCode::kRuntimeError, "unknown variable '" + name + "'");
    return it->second;
  }
  void write(const std::string& name, const Tensor& value) override {
    st_.vars[name] = value;
    st_.var_shapes[name] = value.shape;
  }

 private:
  ExecState& st_;
};

// Executes kernels inline. With a trace attached it also records events.
class ImperativeBackend : public Backend {
 public:
  ImperativeBackend(ExecState& st, const CostConfig& cost, std::vector<std::string>& out, Trace* trace = nullptr)
      : st_(st), vars_(st), cost_(cost), out_(out), trace_(trace) {}

  TensorRef op(OpKind kind, Attrs attrs, const SourceLoc& loc, std::vector<TensorRef> inputs) override {
    std::vector<Tensor> in;
    in.reserve(inputs.size());
    for (const auto& r : inputs) in.push_back(*r.value);
    auto out = execute_kernel(kind, attrs, in, cost_, &vars_);
    TensorRef ref{std::make_shared<const Tensor>(std::move(out[0])), {}, std::nullopt};
    ref.shape = ref.value->shape;
    if (trace_) {
      OpEvent ev{kind, std::move(attrs), loc, {}, {}, false};
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (inputs[i].handle) ev.inputs.push_back(HandleRef{*inputs[i].handle});
        else ev.inputs.push_back(ExternalRef{feed_slot(loc, i)});
      }
      HandleId h = next_handle_++;
      ev.outputs.push_back(h);
      event_of_[h] = trace_->events.size();
      trace_->events.push_back(std::move(ev));
      ref.handle = h;
    }
    return ref;
  }

  TensorPtr materialize(const TensorRef& t) override {
    if (trace_ && t.handle) std::get<OpEvent>(trace_->events[event_of_.at(*t.handle)]).fetch_after = true;
    return t.value;
  }

  void loop_enter(LoopId l) override {
    if (trace_) trace_->events.push_back(LoopEnter{l});
  }
  void loop_iter(LoopId l) override {
    if (trace_) trace_->events.push_back(LoopIterStart{l});
  }
  void loop_exit(LoopId l) override {
    if (trace_) trace_->events.push_back(LoopExit{l});
  }
  void print(std::string line) override { out_.push_back(std::move(line)); }

  void finish() {
    if (trace_) trace_->events.push_back(StepEnd{});
  }

 private:
  ExecState& st_;
  StateVars vars_;
  const CostConfig& cost_;
  std::vector<std::string>& out_;
  Trace* trace_;
  HandleId next_handle_ = 0;
  std::map<HandleId, std::size_t> event_of_;
};

// How the skeleton talks to the graph runner.
class HostLink {
 public:
  virtual ~HostLink() = default;
  virtual void push_decision(const Decision& d) = 0;
  virtual void push_feed(const FeedSlot& slot, TensorPtr t) = 0;
  virtual TensorPtr fetch(NodeId node, std::int64_t occurrence) = 0;
};

class ChannelLink : public HostLink {
 public:
  explicit ChannelLink(ChannelSet& ch) : ch_(ch) {}
  void push_decision(const Decision& d) override { ch_.push_decision(d); }
  void push_feed(const FeedSlot& slot, TensorPtr t) override { ch_.push_feed(slot, std::move(t)); }
  TensorPtr fetch(NodeId node, std::int64_t occurrence) override { return ch_.wait_fetch(node, occurrence); }

 private:
  ChannelSet& ch_;
};

// Thrown out of the skeleton when the live step leaves the TraceGraph.
struct StepDiverged {
  std::string reason;
};

class SkeletonBackend : public Backend {
 public:
  SkeletonBackend(ExecState& st, Cursor& cursor, HostLink& link, std::vector<std::string>& prints, bool check)
      : st_(st), cursor_(cursor), link_(link), prints_(prints), check_(check) {}

  TensorRef op(OpKind kind, Attrs attrs, const SourceLoc& loc, std::vector<TensorRef> inputs) override {
    std::vector<Shape> shapes;
    for (const auto& r : inputs) shapes.push_back(r.shape);
    Shape out_shape = infer_shape(kind, attrs, shapes, &st_.var_shapes)[0];
    OpEvent ev{kind, attrs, loc, {}, {}, false};
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (inputs[i].handle) ev.inputs.push_back(HandleRef{*inputs[i].handle});
      else ev.inputs.push_back(ExternalRef{feed_slot(loc, i)});
    }
    HandleId h = next_handle_++;
    ev.outputs.push_back(h);
    advance(ev);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (!inputs[i].handle) link_.push_feed(feed_slot(loc, i), inputs[i].value);
    }
    if (kind == OpKind::kAssignVar) st_.var_shapes[*attrs.at("var_name").get_if<std::string>()] = out_shape;
    ++ops_;
    shapes_[h] = out_shape;
    return TensorRef{nullptr, out_shape, h};
  }

  TensorPtr materialize(const TensorRef& t) override {
    if (t.value) return t.value;
    if (!t.handle) fail(ErrorCode::kInternal, "empty tensor without a handle");
    if (auto it = fetched_.find(*t.handle); it != fetched_.end()) return it->second;
    auto target = cursor_.fetch_target(*t.handle);
    if (!target) throw StepDiverged{"materialized a value the graph does not fetch"};
    TensorPtr v = link_.fetch(target->first, target->second);
    if (check_ && v->shape != shapes_.at(*t.handle)) {
      fail(ErrorCode::kInternal, "fetched tensor has shape " + shape_to_string(v->shape) + ", handle says " +
                                     shape_to_string(shapes_.at(*t.handle)));
    }
    fetched_[*t.handle] = v;
    return v;
  }

  void loop_enter(LoopId l) override { advance(LoopEnter{l}); }
  void loop_iter(LoopId l) override { advance(LoopIterStart{l}); }
  void loop_exit(LoopId l) override { advance(LoopExit{l}); }
  void print(std::string line) override { prints_.push_back(std::move(line)); }

  void finish() { advance(StepEnd{}); }

  std::size_t ops_issued() const { return ops_; }

 private:
  ExecState& st_;
  Cursor& cursor_;
  HostLink& link_;
  std::vector<std::string>& prints_;
  bool check_;
  HandleId next_handle_ = 0;
  std::size_t ops_ = 0;
  std::map<HandleId, TensorPtr> fetched_;
  std::map<HandleId, Shape> shapes_;

  void advance(const TraceEvent& ev) {
    auto adv = cursor_.advance(ev);
    if (!adv) throw StepDiverged{"event outside the TraceGraph"};
    for (const auto& d : adv->decisions) link_.push_decision(d);
  }
};

// ---------------------------------------------------------------------------

class Interpreter {
 public:
  Interpreter(ExecState& st, Backend& be) : st_(st), be_(be) {}

  void run_prologue() {
    Env env;
    for (const auto& s : st_.program->prologue) exec(s, env, true);
    for (auto& [k, v] : env) st_.globals[k] = std::move(v);
  }

  void run_step() {
    Env env = st_.globals;
    for (const auto& s : st_.program->body) exec(s, env, false);
  }

 private:
  ExecState& st_;
  Backend& be_;

  [[noreturn]] static void runtime(const std::string& msg) { fail(ErrorCode::kRuntimeError, msg); }

  static TensorRef lift(const Value& v, const char* what) {
    if (auto t = std::get_if<TensorRef>(&v)) return *t;
    if (auto d = std::get_if<double>(&v)) {
      auto t = std::make_shared<const Tensor>(Tensor::scalar(*d));
      return TensorRef{t, {}, std::nullopt};
    }
    if (auto l = std::get_if<NumList>(&v)) {
      auto t = std::make_shared<const Tensor>(Shape{static_cast<std::int64_t>(l->items.size())}, l->items);
      return TensorRef{t, t->shape, std::nullopt};
    }
    runtime(std::string(what) + " must be a tensor or number, got " + std::string(value_type_name(v)));
  }

  static Shape to_shape(const Value& v, const char* what) {
    const auto* l = std::get_if<NumList>(&v);
    if (!l) runtime(std::string(what) + " must be a list of integers, got " + std::string(value_type_name(v)));
    Shape s;
    for (double d : l->items) {
      if (d != std::floor(d) || std::abs(d) > 1e15) runtime(std::string(what) + " must contain integers");
      s.push_back(static_cast<std::int64_t>(d));
    }
    return s;
  }

  static double to_number(const Value& v, const char* what) {
    if (auto d = std::get_if<double>(&v)) return *d;
    runtime(std::string(what) + " must be a number, got " + std::string(value_type_name(v)));
  }

  static bool to_bool(const Value& v, const char* what) {
    if (auto b = std::get_if<bool>(&v)) return *b;
    runtime(std::string(what) + " must be a boolean, got " + std::string(value_type_name(v)));
  }

  Value host(const Value& v) {
    if (auto t = std::get_if<TensorRef>(&v)) {
      TensorPtr m = be_.materialize(*t);
      return TensorRef{m, m->shape, t->handle};
    }
    return v;
  }

  Value eval(const Expr& e, Env& env) {
    switch (e.kind) {
      case ExprKind::kNumber: return e.number;
      case ExprKind::kString: return e.text;
      case ExprKind::kBool: return e.boolean;
      case ExprKind::kList: {
        NumList l;
        for (const auto& a : e.args) l.items.push_back(to_number(eval(*a, env), "list element"));
        return l;
      }
      case ExprKind::kIdent: {
        if (e.is_var) return be_.op(OpKind::kReadVar, {{"var_name", AttrValue(e.text)}}, e.loc, {});
        auto it = env.find(e.text);
        if (it == env.end()) runtime("name '" + e.text + "' is not bound here");
        return it->second;
      }
      case ExprKind::kOpCall: return eval_op(e, env);
      case ExprKind::kInput: {
        std::optional<Shape> shape;
        if (!e.args.empty()) shape = to_shape(eval(*e.args[0], env), "input shape");
        TensorPtr t = st_.dataset.next(e.text, shape);
        return TensorRef{t, t->shape, std::nullopt};
      }
      case ExprKind::kNative: {
        std::vector<Value> args;
        for (const auto& a : e.args) args.push_back(host(eval(*a, env)));
        return eval_native(e.text, args, NativeContext{st_.seed, st_.step});
      }
      case ExprKind::kItem: {
        Value v = eval(*e.args[0], env);
        if (auto t = std::get_if<TensorRef>(&v)) return tensor_to_host(*be_.materialize(*t));
        return v;
      }
      case ExprKind::kUnary: {
        Value v = eval(*e.args[0], env);
        if (e.text == "not") return !to_bool(v, "operand of `not`");
        if (is_tensor(v)) runtime("host arithmetic on a tensor; use tensor operations");
        return -to_number(v, "operand of unary `-`");
      }
      case ExprKind::kBinary: return eval_binary(e, env);
    }
    runtime("unsupported expression");
  }

  Value eval_binary(const Expr& e, Env& env) {
    const std::string& op = e.text;
    if (op == "and" || op == "or") {
      const char* what = op == "and" ? "operand of `and`" : "operand of `or`";
      bool lhs = to_bool(eval(*e.args[0], env), what);
      if (op == "and" && !lhs) return false;
      if (op == "or" && lhs) return true;
      return to_bool(eval(*e.args[1], env), what);
    }
    Value a = eval(*e.args[0], env);
    Value b = eval(*e.args[1], env);
    if (is_tensor(a) || is_tensor(b)) runtime("host operator `" + op + "` applied to a tensor; use tensor operations");
    if (op == "==" || op == "!=") {
      bool eq = a.index() == b.index();
      if (eq) {
        if (auto x = std::get_if<double>(&a)) eq = *x == std::get<double>(b);
        else if (auto p = std::get_if<bool>(&a)) eq = *p == std::get<bool>(b);
        else if (auto str = std::get_if<std::string>(&a)) eq = *str == std::get<std::string>(b);
        else if (auto l = std::get_if<NumList>(&a)) eq = *l == std::get<NumList>(b);
      }
      return op == "==" ? eq : !eq;
    }
    if (op == "+" && std::holds_alternative<std::string>(a) && std::holds_alternative<std::string>(b)) {
      return std::get<std::string>(a) + std::get<std::string>(b);
    }
    double x = to_number(a, "left operand");
    double y = to_number(b, "right operand");
    if (op == "+") return x + y;
    if (op == "-") return x - y;
    if (op == "*") return x * y;
    if (op == "/") return x / y;
    if (op == "<") return x < y;
    if (op == ">") return x > y;
    if (op == "<=") return x <= y;
    if (op == ">=") return x >= y;
    runtime("unknown operator `" + op + "`");
  }

  Value eval_op(const Expr& e, Env& env) {
    Attrs attrs;
    std::vector<TensorRef> inputs;
    switch (e.op) {
      case OpKind::kTranspose:
      case OpKind::kReshape: {
        inputs.push_back(lift(eval(*e.args[0], env), "operation input"));
        Shape s = to_shape(eval(*e.args[1], env), e.op == OpKind::kTranspose ? "permutation" : "target shape");
        attrs[e.op == OpKind::kTranspose ? "perm" : "target_shape"] = AttrValue(std::move(s));
        break;
      }
      case OpKind::kFill: {
        Shape s = to_shape(eval(*e.args[0], env), "fill shape");
        double v = to_number(eval(*e.args[1], env), "fill value");
        attrs["shape"] = AttrValue(std::move(s));
        attrs["value"] = AttrValue(v);
        break;
      }
      default:
        for (const auto& a : e.args) inputs.push_back(lift(eval(*a, env), "operation input"));
        break;
    }
    return be_.op(e.op, std::move(attrs), e.loc, std::move(inputs));
  }

  void exec_block(const Block& b, Env& env, bool prologue) {
    for (const auto& s : b) exec(s, env, prologue);
  }

  void exec(const Stmt& s, Env& env, bool prologue) {
    try {
      exec_inner(s, env, prologue);
    } catch (Error& err) {
      if (!err.is_static()) {
        if (!err.line) {
          err.line = s.line;
          err.column = s.column;
        }
        if (!err.step && !prologue) err.step = st_.step;
        if (!err.phase && prologue) err.phase = "prologue";
      }
      throw;
    }
  }

  void exec_inner(const Stmt& s, Env& env, bool prologue) {
    switch (s.kind) {
      case StmtKind::kVarDecl: {
        TensorRef t = lift(eval(*s.value, env), "var initializer");
        TensorPtr v = be_.materialize(t);
        st_.vars[s.name] = *v;
        st_.var_shapes[s.name] = v->shape;
        break;
      }
      case StmtKind::kLet:
        env[s.name] = eval(*s.value, env);
        break;
      case StmtKind::kAssign:
        if (s.assigns_var) {
          TensorRef t = lift(eval(*s.value, env), "value assigned to a var");
          be_.op(OpKind::kAssignVar, {{"var_name", AttrValue(s.name)}}, s.assign_loc, {std::move(t)});
        } else {
          env[s.name] = eval(*s.value, env);
        }
        break;
      case StmtKind::kPrint: {
        Value v = eval(*s.value, env);
        if (auto t = std::get_if<TensorRef>(&v)) be_.print(format_tensor(*be_.materialize(*t)));
        else be_.print(format_value(v));
        break;
      }
      case StmtKind::kExpr:
        eval(*s.value, env);
        break;
      case StmtKind::kIf: {
        for (std::size_t i = 0; i < s.conds.size(); ++i) {
          if (to_bool(eval(*s.conds[i], env), "if condition")) {
            exec_block(s.blocks[i], env, prologue);
            return;
          }
        }
        if (s.has_else) exec_block(s.blocks.back(), env, prologue);
        break;
      }
      case StmtKind::kWhile: {
        be_.loop_enter(s.loop_id);
        for (;;) {
          be_.loop_iter(s.loop_id);
          if (!to_bool(eval(*s.conds[0], env), "while condition")) break;
          exec_block(s.blocks[0], env, prologue);
        }
        be_.loop_exit(s.loop_id);
        break;
      }
      case StmtKind::kFor: {
        double n = to_number(eval(*s.value, env), "range count");
        if (n != std::floor(n) || n < 0) runtime("range count must be a non-negative integer");
        be_.loop_enter(s.loop_id);
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
          env[s.name] = static_cast<double>(i);
          be_.loop_iter(s.loop_id);
          exec_block(s.blocks[0], env, prologue);
        }
        be_.loop_exit(s.loop_id);
        break;
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Mode entry points.

struct InterpConfig {
  std::uint64_t seed = 0;
  CostConfig cost;
  std::optional<std::int64_t> step_override;
};

inline std::int64_t step_count(const Program& p, const InterpConfig& cfg) {
  return cfg.step_override.value_or(p.step_count);
}

// Runs the prologue (imperatively, untraced) and returns the state at step 0.
inline ExecState init_state(const Program& p, Dataset dataset, const InterpConfig& cfg, std::vector<std::string>& out) {
  ExecState st;
  st.program = &p;
  st.dataset = std::move(dataset);
  st.seed = cfg.seed;
  ImperativeBackend be(st, cfg.cost, out);
  Interpreter(st, be).run_prologue();
  return st;
}

inline void run_imperative_step(ExecState& st, const CostConfig& cost, std::vector<std::string>& out) {
  ImperativeBackend be(st, cost, out);
  Interpreter(st, be).run_step();
}

inline Trace run_traced_step(ExecState& st, const CostConfig& cost, std::vector<std::string>& out) {
  Trace trace;
  ImperativeBackend be(st, cost, out, &trace);
  Interpreter(st, be).run_step();
  be.finish();
  return trace;
}

// Replay is a traced step from a snapshot; the caller restores the snapshot
// and rolls the variable store back first.
inline Trace replay_step_imperative(ExecState& snapshot, const CostConfig& cost, std::vector<std::string>& out) {
  return run_traced_step(snapshot, cost, out);
}

enum class StepStatus { kCompleted, kDiverged };

struct SkeletonOutcome {
  StepStatus status = StepStatus::kCompleted;
  std::string reason;
  std::size_t ops_issued = 0;
};

// Host side of one co-executed step. Prints go to `prints` and must only be
// flushed once the step commits.
inline SkeletonOutcome run_skeleton_step(ExecState& st, Cursor& cursor, HostLink& link,
                                         std::vector<std::string>& prints, bool check = false) {
  SkeletonBackend be(st, cursor, link, prints, check);
  try {
    Interpreter(st, be).run_step();
    be.finish();
  } catch (const StepDiverged& d) {
    return {StepStatus::kDiverged, d.reason, be.ops_issued()};
  }
  return {StepStatus::kCompleted, {}, be.ops_issued()};
}

inline RunResult run_imperative(const Program& p, Dataset dataset, const InterpConfig& cfg = {}) {
  RunResult r;
  ExecState st = init_state(p, std::move(dataset), cfg, r.lines);
  const std::int64_t n = step_count(p, cfg);
  for (st.step = 0; st.step < n; ++st.step) {
    auto t0 = std::chrono::steady_clock::now();
    run_imperative_step(st, cfg.cost, r.lines);
    r.step_ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  r.vars = st.vars;
  return r;
}

}  // namespace duet
