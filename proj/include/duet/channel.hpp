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

// Bounded FIFO channels between the host interpreter and the graph runner.
// One mutex guards everything; a single condition variable wakes both sides.

#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <utility>

#include "duet/error.hpp"
#include "duet/trace_graph.hpp"
#include "duet/value.hpp"

namespace duet {

// Thrown inside the runner when the host cancels the pass.
struct PassCancelled {};

class ChannelSet {
 public:
  using Clock = std::chrono::steady_clock;

  // capacity 0 means unbounded. A non-blocking channel set never waits; an
  // empty queue on the runner side is an internal error (used when the
  // runner is driven synchronously from the host thread).
  explicit ChannelSet(std::size_t capacity = 64, bool blocking = true) : capacity_(capacity), blocking_(blocking) {}

  void reset() {
    std::lock_guard lock(mu_);
    decisions_.clear();
    feeds_.clear();
    fetches_.clear();
    cache_.clear();
    cancelled_ = false;
    closed_ = false;
    notify_pending_ = false;
    host_wait_ = runner_wait_ = Clock::duration::zero();
  }

  // ---- host side

  void push_decision(Decision d) {
    std::unique_lock lock(mu_);
    host_wait(lock, [&] { return !full(decisions_.size()); });
    decisions_.push_back(std::move(d));
    cv_.notify_all();
  }

  void push_feed(const FeedSlot& slot, TensorPtr t) {
    std::unique_lock lock(mu_);
    host_wait(lock, [&] { return !full(feeds_[slot].size()); });
    feeds_[slot].push_back(std::move(t));
    cv_.notify_all();
  }

  // Non-blocking lookup of a fetched value.
  std::optional<TensorPtr> try_fetch(NodeId node, std::int64_t occurrence) {
    std::lock_guard lock(mu_);
    drain();
    auto it = cache_.find({node, occurrence});
    if (it == cache_.end()) return std::nullopt;
    return it->second;
  }

  TensorPtr wait_fetch(NodeId node, std::int64_t occurrence) {
    std::unique_lock lock(mu_);
    std::pair<NodeId, std::int64_t> key{node, occurrence};
    host_wait(lock, [&] { return cache_.count(key) > 0; });
    return cache_.at(key);
  }

  void cancel() {
    std::lock_guard lock(mu_);
    cancelled_ = true;
    cv_.notify_all();
  }

  // Called by the runner when a pass ends for any reason.
  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    notify_pending_ = false;
    cv_.notify_all();
  }

  // ---- runner side

  Decision pop_decision() {
    std::unique_lock lock(mu_);
    runner_wait(lock, [&] { return !decisions_.empty(); }, "decision");
    const bool was_full = full(decisions_.size());
    Decision d = std::move(decisions_.front());
    decisions_.pop_front();
    if (was_full) cv_.notify_all();
    return d;
  }

  TensorPtr pop_feed(const FeedSlot& slot) {
    std::unique_lock lock(mu_);
    auto& q = feeds_[slot];
    runner_wait(lock, [&] { return !q.empty(); }, "feed");
    const bool was_full = full(q.size());
    TensorPtr t = std::move(q.front());
    q.pop_front();
    if (was_full) cv_.notify_all();
    return t;
  }

  void push_fetch(NodeId node, std::int64_t occurrence, TensorPtr t) {
    std::unique_lock lock(mu_);
    auto& q = fetches_[node];
    runner_wait(lock, [&] { return !full(q.size()); }, "fetch space");
    q.emplace_back(occurrence, std::move(t));
    notify_pending_ = true;
  }

  // Emulated kernel latency on the runner side. Pending fetch wake-ups are
  // sent while holding the lock and the wait releases it atomically, so a
  // woken host cannot run ahead of the runner going idle. Returns early on
  // cancellation.
  void idle_until(Clock::time_point deadline) {
    std::unique_lock lock(mu_);
    if (notify_pending_) {
      notify_pending_ = false;
      cv_.notify_all();
    }
    while (!cancelled_ && Clock::now() < deadline) cv_.wait_until(lock, deadline);
  }

  bool cancelled() const {
    std::lock_guard lock(mu_);
    return cancelled_;
  }

  // Decisions the runner has not consumed; nonzero after a completed pass
  // means host and graph disagreed about the control path.
  std::size_t pending_decisions() const {
    std::lock_guard lock(mu_);
    return decisions_.size();
  }

  Clock::duration host_wait_time() const {
    std::lock_guard lock(mu_);
    return host_wait_;
  }
  Clock::duration runner_wait_time() const {
    std::lock_guard lock(mu_);
    return runner_wait_;
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::size_t capacity_;
  bool blocking_;
  std::deque<Decision> decisions_;
  std::map<FeedSlot, std::deque<TensorPtr>> feeds_;
  std::map<NodeId, std::deque<std::pair<std::int64_t, TensorPtr>>> fetches_;
  std::map<std::pair<NodeId, std::int64_t>, TensorPtr> cache_;  // host-side
  bool cancelled_ = false;
  bool closed_ = false;
  bool notify_pending_ = false;
  Clock::duration host_wait_{};
  Clock::duration runner_wait_{};

  bool full(std::size_t n) const { return capacity_ != 0 && n >= capacity_; }

  // Moves runner output into the host cache so the runner never blocks on
  // fetches the host is not currently waiting for.
  void drain() {
    bool moved = false;
    for (auto& [node, q] : fetches_) {
      while (!q.empty()) {
        cache_[{node, q.front().first}] = std::move(q.front().second);
        q.pop_front();
        moved = true;
      }
    }
    if (moved) cv_.notify_all();
  }

  template <typename Pred>
  void host_wait(std::unique_lock<std::mutex>& lock, Pred ready) {
    drain();
    if (ready()) return;
    auto t0 = Clock::now();
    for (;;) {
      if (closed_ || cancelled_) fail(ErrorCode::kChannelClosed, "graph pass ended while the host was waiting");
      if (!blocking_) fail(ErrorCode::kInternal, "host would block on a synchronous channel");
      cv_.wait(lock);
      drain();
      if (ready()) break;
    }
    host_wait_ += Clock::now() - t0;
  }

  template <typename Pred>
  void runner_wait(std::unique_lock<std::mutex>& lock, Pred ready, const char* what) {
    if (cancelled_) throw PassCancelled{};
    if (ready()) return;
    if (!blocking_) fail(ErrorCode::kInternal, std::string("graph pass needs a ") + what + " the host has not produced");
    if (notify_pending_) {
      notify_pending_ = false;
      cv_.notify_all();
    }
    auto t0 = Clock::now();
    cv_.wait(lock, [&] { return cancelled_ || ready(); });
    runner_wait_ += Clock::now() - t0;
    if (cancelled_) throw PassCancelled{};
  }
};

}  // namespace duet
