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

// Phase machine that alternates between tracing steps and co-executed
// steps, plus the lazy (serialized) comparison mode.

#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "duet/channel.hpp"
#include "duet/dataset.hpp"
#include "duet/graph_gen.hpp"
#include "duet/graph_runner.hpp"
#include "duet/interp.hpp"
#include "duet/trace_graph.hpp"
#include "json.hpp"

namespace duet {

enum class Mode { kImperative, kCoExec, kLazy, kSkeletonCheck };
enum class Phase { kTracing, kCoExec, kImperativeOnly };

inline std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::kImperative: return "imperative";
    case Mode::kCoExec: return "coexec";
    case Mode::kLazy: return "lazy";
    case Mode::kSkeletonCheck: return "skeleton-check";
  }
  return "?";
}

inline std::optional<Mode> mode_from_name(std::string_view s) {
  for (Mode m : {Mode::kImperative, Mode::kCoExec, Mode::kLazy, Mode::kSkeletonCheck}) {
    if (mode_name(m) == s) return m;
  }
  return std::nullopt;
}

inline std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::kTracing: return "tracing";
    case Phase::kCoExec: return "coexec";
    case Phase::kImperativeOnly: return "imperative-only";
  }
  return "?";
}

struct RunConfig {
  Mode mode = Mode::kCoExec;
  std::uint64_t seed = 0;
  CostConfig cost;
  std::size_t max_ops = 10000;
  std::size_t capacity = 64;
  std::optional<std::int64_t> step_override;
};

struct StepSample {
  std::string phase;
  double wall_ms = 0;
  double python_exec_ms = 0;
  double python_stall_ms = 0;
  double graph_exec_ms = 0;
  double graph_stall_ms = 0;
};

struct PhaseChange {
  std::int64_t step = 0;
  Phase from = Phase::kTracing;
  Phase to = Phase::kTracing;
};

struct Stats {
  std::string mode;
  double wall_ms = 0;
  double python_exec_ms = 0;
  double python_stall_ms = 0;
  double graph_exec_ms = 0;
  double graph_stall_ms = 0;
  std::int64_t phase_transitions = 0;
  std::int64_t traces_collected = 0;
  std::int64_t graph_regens = 0;
  std::int64_t steps_replayed = 0;
  double throughput = 0;  // steps per second
  std::vector<StepSample> steps;
  std::vector<PhaseChange> phase_log;
};

inline nlohmann::json stats_to_json(const Stats& s) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& x : s.steps) {
    steps.push_back({{"phase", x.phase},
                     {"wall_ms", x.wall_ms},
                     {"python_exec_ms", x.python_exec_ms},
                     {"python_stall_ms", x.python_stall_ms},
                     {"graph_exec_ms", x.graph_exec_ms},
                     {"graph_stall_ms", x.graph_stall_ms}});
  }
  nlohmann::json log = nlohmann::json::array();
  for (const auto& c : s.phase_log) log.push_back({{"step", c.step}, {"from", phase_name(c.from)}, {"to", phase_name(c.to)}});
  return {{"mode", s.mode},
          {"wall_ms", s.wall_ms},
          {"python_exec_ms", s.python_exec_ms},
          {"python_stall_ms", s.python_stall_ms},
          {"graph_exec_ms", s.graph_exec_ms},
          {"graph_stall_ms", s.graph_stall_ms},
          {"phase_transitions", s.phase_transitions},
          {"traces_collected", s.traces_collected},
          {"graph_regens", s.graph_regens},
          {"steps_replayed", s.steps_replayed},
          {"throughput", s.throughput},
          {"steps", steps},
          {"phase_log", log}};
}

struct RunOutcome {
  RunResult result;
  Stats stats;
  std::optional<Error> error;  // runtime error that ended the run
};

namespace detail {

inline double ms(std::chrono::steady_clock::duration d) { return std::chrono::duration<double, std::milli>(d).count(); }

// Skeleton link for lazy mode: the pass only advances when the host needs
// a fetched value.
class LazyLink : public HostLink {
 public:
  LazyLink(ChannelSet& ch, PassExecutor& ex) : ch_(ch), ex_(ex) {}

  void push_decision(const Decision& d) override { ch_.push_decision(d); }
  void push_feed(const FeedSlot& slot, TensorPtr t) override { ch_.push_feed(slot, std::move(t)); }

  TensorPtr fetch(NodeId node, std::int64_t occurrence) override {
    auto t0 = std::chrono::steady_clock::now();
    std::optional<TensorPtr> t;
    while (!(t = ch_.try_fetch(node, occurrence))) {
      if (ex_.done()) fail(ErrorCode::kInternal, "graph pass ended without producing a fetched value");
      ex_.step();
    }
    stall_ += std::chrono::steady_clock::now() - t0;
    return *t;
  }

  std::chrono::steady_clock::duration stall() const { return stall_; }

 private:
  ChannelSet& ch_;
  PassExecutor& ex_;
  std::chrono::steady_clock::duration stall_{};
};

}  // namespace detail

class Orchestrator {
 public:
  Orchestrator(const Program& program, Dataset dataset, RunConfig cfg)
      : program_(program),
        dataset_(std::move(dataset)),
        cfg_(std::move(cfg)),
        ch_(lazy() ? 0 : cfg_.capacity, !lazy()) {
    if (cfg_.mode == Mode::kCoExec || cfg_.mode == Mode::kSkeletonCheck) runner_ = std::make_unique<GraphRunner>();
  }

  RunOutcome run() {
    tighten_timer_slack();
    RunOutcome out;
    out.stats.mode = std::string(mode_name(cfg_.mode));
    stats_ = &out.stats;
    lines_ = &out.result.lines;
    auto run_start = std::chrono::steady_clock::now();
    try {
      InterpConfig icfg{cfg_.seed, cfg_.cost, cfg_.step_override};
      st_ = init_state(program_, dataset_, icfg, out.result.lines);
      const std::int64_t n = step_count(program_, icfg);
      for (st_.step = 0; st_.step < n; ++st_.step) {
        StepSample sample;
        sample.phase = std::string(phase_name(phase_));
        auto t0 = std::chrono::steady_clock::now();
        try {
          if (cfg_.mode == Mode::kImperative) {
            run_imperative_step(st_, cfg_.cost, out.result.lines);
          } else if (phase_ == Phase::kCoExec) {
            step_coexec(sample);
          } else if (phase_ == Phase::kImperativeOnly) {
            run_imperative_step(st_, cfg_.cost, out.result.lines);
          } else {
            step_tracing();
          }
        } catch (Error& e) {
          if (!e.phase && cfg_.mode != Mode::kImperative) e.phase = std::string(phase_name(phase_));
          throw;
        }
        sample.wall_ms = detail::ms(std::chrono::steady_clock::now() - t0);
        sample.python_exec_ms = std::max(0.0, sample.wall_ms - sample.python_stall_ms);
        out.result.step_ms.push_back(sample.wall_ms);
        out.stats.steps.push_back(sample);
      }
    } catch (const Error& e) {
      out.error = e;
    }
    out.result.vars = phase_ == Phase::kCoExec ? store_.snapshot_vars() : st_.vars;
    Stats& s = out.stats;
    s.wall_ms = detail::ms(std::chrono::steady_clock::now() - run_start);
    double step_total = 0;
    for (const auto& x : s.steps) {
      s.python_exec_ms += x.python_exec_ms;
      s.python_stall_ms += x.python_stall_ms;
      s.graph_exec_ms += x.graph_exec_ms;
      s.graph_stall_ms += x.graph_stall_ms;
      step_total += x.wall_ms;
    }
    s.throughput = step_total > 0 ? static_cast<double>(s.steps.size()) / (step_total / 1000.0) : 0.0;
    return out;
  }

  const TraceGraph& trace_graph() const { return tg_; }

 private:
  const Program& program_;
  Dataset dataset_;
  RunConfig cfg_;
  ChannelSet ch_;
  std::unique_ptr<GraphRunner> runner_;
  ExecState st_;
  Phase phase_ = Phase::kTracing;
  TraceGraph tg_;
  std::optional<SymProgram> sp_;
  VariableStore store_;
  Stats* stats_ = nullptr;
  std::vector<std::string>* lines_ = nullptr;

  bool lazy() const { return cfg_.mode == Mode::kLazy; }
  bool check() const { return cfg_.mode == Mode::kSkeletonCheck; }

  void transition(Phase to) {
    stats_->phase_log.push_back({st_.step, phase_, to});
    ++stats_->phase_transitions;
    if (to == Phase::kCoExec) {
      store_.reset(std::move(st_.vars));
      st_.vars.clear();
    } else if (phase_ == Phase::kCoExec) {
      st_.vars = store_.snapshot_vars();
    }
    phase_ = to;
  }

  void absorb(const Trace& trace) {
    MergeReport rep = merge_trace(tg_, trace);
    ++stats_->traces_collected;
    if (check()) {
      if (auto bad = tg_.check_invariants()) fail(ErrorCode::kInternal, "TraceGraph invariant violated: " + *bad);
      if (!covers(tg_, trace)) fail(ErrorCode::kInternal, "merged trace is not covered by the TraceGraph");
    }
    if (!rep.covered) return;
    try {
      sp_ = structure(tg_, GenConfig{cfg_.max_ops});
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kBudgetExceeded) throw;
      transition(Phase::kImperativeOnly);
      return;
    }
    ++stats_->graph_regens;
    transition(Phase::kCoExec);
  }

  void step_tracing() {
    Trace trace = run_traced_step(st_, cfg_.cost, *lines_);
    absorb(trace);
  }

  void step_coexec(StepSample& sample) {
    ExecState snapshot = st_;
    ch_.reset();
    std::vector<std::string> prints;
    Cursor cursor(tg_);
    SkeletonOutcome out;
    std::optional<Error> host_error;
    PassResult pr;
    std::chrono::steady_clock::duration stall{};

    if (lazy()) {
      store_.begin_pass();
      PassExecutor ex(*sp_, ch_, store_, cfg_.cost);
      detail::LazyLink link(ch_, ex);
      try {
        out = run_skeleton_step(st_, cursor, link, prints, false);
      } catch (const Error& e) {
        host_error = e;
      }
      if (!host_error && out.status == StepStatus::kCompleted) {
        auto t0 = std::chrono::steady_clock::now();
        try {
          ex.run();
          pr.outcome = PassOutcome::kCompleted;
        } catch (const Error& e) {
          pr.outcome = PassOutcome::kFailed;
          pr.error = e;
        }
        stall = link.stall() + (std::chrono::steady_clock::now() - t0);
      } else {
        pr.outcome = PassOutcome::kCancelled;
        stall = link.stall();
      }
      pr.stats = ex.stats();
    } else {
      runner_->start(*sp_, ch_, store_, cfg_.cost, check());
      ChannelLink link(ch_);
      try {
        out = run_skeleton_step(st_, cursor, link, prints, check());
      } catch (const Error& e) {
        host_error = e;
      }
      if (host_error || out.status == StepStatus::kDiverged) ch_.cancel();
      auto t0 = std::chrono::steady_clock::now();
      pr = runner_->wait();
      stall = ch_.host_wait_time() + (std::chrono::steady_clock::now() - t0);
    }

    sample.python_stall_ms = detail::ms(stall);
    sample.graph_exec_ms = detail::ms(pr.stats.exec);
    sample.graph_stall_ms = detail::ms(pr.stats.stall);

    bool host_ok = !host_error && out.status == StepStatus::kCompleted;
    // The runner may run ahead into a path the host later rejects; its
    // failure only counts when the host accepted the whole step.
    if (pr.outcome == PassOutcome::kFailed && host_ok) {
      store_.rollback();
      throw *pr.error;
    }
    if (host_ok) {
      if (pr.outcome != PassOutcome::kCompleted) fail(ErrorCode::kInternal, "graph pass did not complete");
      if (ch_.pending_decisions() != 0) fail(ErrorCode::kDecisionMismatch, "graph pass left decisions unconsumed");
      if (check() && pr.stats.ops_executed != out.ops_issued) {
        fail(ErrorCode::kInternal, "graph executed " + std::to_string(pr.stats.ops_executed) + " ops, host issued " +
                                       std::to_string(out.ops_issued));
      }
      store_.commit();
      for (auto& l : prints) lines_->push_back(std::move(l));
      return;
    }

    // Divergence (or a host error, which the replay reproduces): discard
    // the attempt and redo the step imperatively from the snapshot.
    store_.rollback();
    st_ = std::move(snapshot);
    transition(Phase::kTracing);
    ++stats_->steps_replayed;
    st_.sync_var_shapes();
    Trace trace = replay_step_imperative(st_, cfg_.cost, *lines_);
    absorb(trace);
  }
};

inline RunOutcome run(const Program& program, Dataset dataset, const RunConfig& cfg) {
  return Orchestrator(program, std::move(dataset), cfg).run();
}

// Runs `steps` traced steps and merges every trace.
inline TraceGraph trace_steps(const Program& program, Dataset dataset, const RunConfig& cfg, std::int64_t steps) {
  std::vector<std::string> lines;
  InterpConfig icfg{cfg.seed, cfg.cost, std::nullopt};
  ExecState st = init_state(program, std::move(dataset), icfg, lines);
  TraceGraph tg;
  for (st.step = 0; st.step < steps; ++st.step) merge_trace(tg, run_traced_step(st, cfg.cost, lines));
  return tg;
}

inline RunOutcome run_lazy(const Program& program, Dataset dataset, RunConfig cfg) {
  cfg.mode = Mode::kLazy;
  return run(program, std::move(dataset), cfg);
}

}  // namespace duet
