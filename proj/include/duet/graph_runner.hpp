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

// Executes symbolic programs, one pass per step, against a transactional
// variable store.

#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "duet/channel.hpp"
#include "duet/error.hpp"
#include "duet/graph_gen.hpp"
#include "duet/tensor.hpp"

namespace duet {

using VarMap = std::map<std::string, Tensor>;

// Committed variable state plus the overlay written by the in-flight pass.
class VariableStore : public VarAccess {
 public:
  VariableStore() = default;
  explicit VariableStore(VarMap committed) : committed_(std::move(committed)) {}

  const Tensor& read(const std::string& name) override {
    if (auto it = overlay_.find(name); it != overlay_.end()) return it->second;
    auto it = committed_.find(name);
    if (it == committed_.end()) fail(ErrorCode::kRuntimeError, "unknown variable '" + name + "'");
    return it->second;
  }

  void write(const std::string& name, const Tensor& value) override { overlay_[name] = value; }

  void begin_pass() {
    if (in_flight_.exchange(true)) fail(ErrorCode::kInFlightPass, "a pass is already in flight");
    overlay_.clear();
  }

  void commit() {
    for (auto& [k, v] : overlay_) committed_[k] = std::move(v);
    overlay_.clear();
    in_flight_ = false;
  }

  void rollback() {
    overlay_.clear();
    in_flight_ = false;
  }

  bool in_flight() const { return in_flight_; }

  VarMap snapshot_vars() const {
    if (in_flight_) fail(ErrorCode::kInFlightPass, "cannot snapshot variables while a pass is in flight");
    return committed_;
  }

  void reset(VarMap committed) {
    if (in_flight_) fail(ErrorCode::kInFlightPass, "cannot reset variables while a pass is in flight");
    committed_ = std::move(committed);
  }

 private:
  VarMap committed_;
  VarMap overlay_;
  std::atomic<bool> in_flight_{false};
};

struct PassStats {
  std::chrono::nanoseconds exec{0};
  std::chrono::nanoseconds stall{0};
  std::size_t ops_executed = 0;
  std::vector<NodeId> executed;  // only when recording
};

enum class PassOutcome { kCompleted, kCancelled, kFailed };

struct PassResult {
  PassOutcome outcome = PassOutcome::kCompleted;
  PassStats stats;
  std::optional<Error> error;
};

// Stack machine over a SymProgram. step() runs one instruction, which makes
// it usable both from a dedicated thread and interleaved with the host.
class PassExecutor {
 public:
  PassExecutor(const SymProgram& sp, ChannelSet& ch, VariableStore& vars, const CostConfig& cost, bool record = false)
      : ch_(ch), vars_(vars), cost_(cost), record_(record) {
    frames_.push_back({&sp.body, 0, 0});
  }

  bool done() {
    unwind();
    return frames_.empty();
  }

  void step() {
    auto t0 = std::chrono::steady_clock::now();
    if (ch_.cancelled()) throw PassCancelled{};
    if (!done()) exec_one();
    busy_ += std::chrono::steady_clock::now() - t0;
  }

  void run() {
    while (!done()) step();
  }

  // Execution time excludes time spent waiting on channels.
  PassStats stats() const {
    PassStats s = stats_;
    s.stall = std::chrono::duration_cast<std::chrono::nanoseconds>(ch_.runner_wait_time());
    s.exec = std::chrono::duration_cast<std::chrono::nanoseconds>(busy_) - s.stall;
    if (s.exec.count() < 0) s.exec = std::chrono::nanoseconds{0};
    return s;
  }

  const std::map<NodeId, std::vector<TensorPtr>>& outputs() const { return outputs_; }

 private:
  struct Frame {
    const SymBlock* block;
    std::size_t pc;
    std::size_t aux;  // next unrolled copy
  };

  ChannelSet& ch_;
  VariableStore& vars_;
  const CostConfig& cost_;
  bool record_;
  std::vector<Frame> frames_;
  std::map<NodeId, std::vector<TensorPtr>> outputs_;
  std::map<std::pair<NodeId, int>, TensorPtr> fed_;
  PassStats stats_;
  std::chrono::steady_clock::duration busy_{};

  void unwind() {
    while (!frames_.empty() && frames_.back().pc >= frames_.back().block->insts.size()) frames_.pop_back();
  }

  [[noreturn]] static void mismatch(const std::string& what, const Decision& got) {
    fail(ErrorCode::kDecisionMismatch, "expected " + what + ", got " + decision_to_string(got));
  }

  TensorPtr resolve(const ExecOp& op, int i) {
    const InputBinding& b = op.inputs[static_cast<std::size_t>(i)];
    if (b.sources.empty()) fail(ErrorCode::kInternal, "input without sources");
    const InputSource* src = &b.sources[0];
    std::int64_t occ = -1;
    if (b.dynamic()) {
      Decision d = ch_.pop_decision();
      auto bd = std::get_if<BindDecision>(&d);
      if (!bd || bd->node != op.node || bd->input != i) {
        mismatch("binding for node " + std::to_string(op.node) + " input " + std::to_string(i), d);
      }
      if (bd->source < 0 || static_cast<std::size_t>(bd->source) >= b.sources.size()) mismatch("valid source index", d);
      src = &b.sources[static_cast<std::size_t>(bd->source)];
      occ = bd->occurrence;
      if (src->kind == InputSource::Kind::kFeed) return ch_.pop_feed(src->slot);
    } else if (src->kind == InputSource::Kind::kFeed) {
      auto it = fed_.find({op.node, i});
      if (it == fed_.end()) fail(ErrorCode::kInternal, "static feed missing before its op");
      TensorPtr t = std::move(it->second);
      fed_.erase(it);
      return t;
    }
    auto it = outputs_.find(src->producer);
    if (it == outputs_.end() || it->second.empty()) {
      fail(ErrorCode::kDecisionMismatch, "producer " + std::to_string(src->producer) + " has not run");
    }
    if (occ < 0) return it->second.back();
    if (static_cast<std::size_t>(occ) >= it->second.size()) {
      fail(ErrorCode::kDecisionMismatch, "producer " + std::to_string(src->producer) + " occurrence out of range");
    }
    return it->second[static_cast<std::size_t>(occ)];
  }

  void exec_one() {
    Frame& f = frames_.back();
    const SymInst& inst = f.block->insts[f.pc];
    if (auto op = std::get_if<ExecOp>(&inst.v)) {
      std::vector<Tensor> in;
      in.reserve(op->inputs.size());
      for (std::size_t i = 0; i < op->inputs.size(); ++i) in.push_back(*resolve(*op, static_cast<int>(i)));
      auto out = compute_kernel(op->kind, op->attrs, in, &vars_);
      auto latency = kernel_cost(op->kind, out, cost_);
      if (latency.count() > 0) ch_.idle_until(std::chrono::steady_clock::now() + latency);
      outputs_[op->node].push_back(std::make_shared<const Tensor>(std::move(out[0])));
      ++stats_.ops_executed;
      if (record_) stats_.executed.push_back(op->node);
      ++frames_.back().pc;
    } else if (auto feed = std::get_if<InputFeed>(&inst.v)) {
      fed_[{feed->node, feed->input}] = ch_.pop_feed(feed->slot);
      ++frames_.back().pc;
    } else if (auto fetch = std::get_if<OutputFetch>(&inst.v)) {
      const auto& outs = outputs_.at(fetch->node);
      ch_.push_fetch(fetch->node, static_cast<std::int64_t>(outs.size()) - 1, outs.back());
      ++frames_.back().pc;
    } else if (auto sc = std::get_if<SwitchCase>(&inst.v)) {
      Decision d = ch_.pop_decision();
      auto cd = std::get_if<CaseDecision>(&d);
      if (!cd || cd->branch != sc->branch) mismatch("case at node " + std::to_string(sc->branch), d);
      if (cd->case_index < 0 || static_cast<std::size_t>(cd->case_index) >= sc->cases.size()) {
        mismatch("case index within range", d);
      }
      ++frames_.back().pc;
      frames_.push_back({&sc->cases[static_cast<std::size_t>(cd->case_index)], 0, 0});
    } else if (auto w = std::get_if<While>(&inst.v)) {
      Decision d = ch_.pop_decision();
      auto ld = std::get_if<LoopDecision>(&d);
      if (!ld || ld->loop_node != w->loop_node) mismatch("loop decision for node " + std::to_string(w->loop_node), d);
      if (ld->cont) {
        frames_.push_back({&w->body[0], 0, 0});  // the While is re-run after the body
      } else {
        ++frames_.back().pc;
      }
    } else if (auto u = std::get_if<UnrolledLoop>(&inst.v)) {
      if (f.aux < u->copies.size()) {
        std::size_t k = f.aux++;
        frames_.push_back({&u->copies[k], 0, 0});
      } else {
        f.aux = 0;
        ++f.pc;
      }
    }
  }
};

// Runs one pass to completion on the calling thread. Variables are left in
// the overlay; the host decides between commit and rollback.
inline PassResult run_pass(const SymProgram& sp, ChannelSet& ch, VariableStore& vars, const CostConfig& cost,
                           bool record = false) {
  PassResult r;
  PassExecutor ex(sp, ch, vars, cost, record);
  try {
    ex.run();
    r.outcome = PassOutcome::kCompleted;
  } catch (const PassCancelled&) {
    r.outcome = PassOutcome::kCancelled;
  } catch (const Error& e) {
    r.outcome = PassOutcome::kFailed;
    r.error = e;
  }
  r.stats = ex.stats();
  ch.close();
  return r;
}

// A persistent worker thread that executes one pass at a time.
class GraphRunner {
 public:
  GraphRunner() : worker_([this] { loop(); }) {}

  ~GraphRunner() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    worker_.join();
  }

  GraphRunner(const GraphRunner&) = delete;
  GraphRunner& operator=(const GraphRunner&) = delete;

  void start(const SymProgram& sp, ChannelSet& ch, VariableStore& vars, const CostConfig& cost, bool record = false) {
    vars.begin_pass();
    std::lock_guard lock(mu_);
    job_ = Job{&sp, &ch, &vars, cost, record};
    result_.reset();
    cv_.notify_all();
  }

  PassResult wait() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return result_.has_value(); });
    PassResult r = std::move(*result_);
    result_.reset();
    return r;
  }

 private:
  struct Job {
    const SymProgram* sp;
    ChannelSet* ch;
    VariableStore* vars;
    CostConfig cost;
    bool record;
  };

  std::mutex mu_;
  std::condition_variable cv_;
  std::optional<Job> job_;
  std::optional<PassResult> result_;
  bool stop_ = false;
  std::thread worker_;

  void loop() {
    tighten_timer_slack();
    for (;;) {
      Job job;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return stop_ || job_.has_value(); });
        if (stop_) return;
        job = *job_;
        job_.reset();
      }
      PassResult r = run_pass(*job.sp, *job.ch, *job.vars, job.cost, job.record);
      {
        std::lock_guard lock(mu_);
        result_ = std::move(r);
      }
      cv_.notify_all();
    }
  }
};

}  // namespace duet
