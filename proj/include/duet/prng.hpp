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

#pragma once

#include <cstdint>
#include <string_view>

namespace duet {

inline constexpr std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// xorshift64*. A zero state would stay zero forever, so it is remapped to the
// FNV offset basis.
class XorShift64Star {
 public:
  explicit constexpr XorShift64Star(std::uint64_t seed)
      : state_(seed == 0 ? 0xcbf29ce484222325ULL : seed) {}

  constexpr std::uint64_t next_u64() {
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545F4914F6CDD1DULL;
  }

  // Top 53 bits mapped to [0, 1).
  constexpr double next_unit() {
    return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
  }

  constexpr void discard(std::uint64_t n) {
    for (std::uint64_t i = 0; i < n; ++i) next_u64();
  }

  constexpr std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

// Draw number `index` (0-based) of the stream `name` under `seed`.
inline double stream_draw(std::uint64_t seed, std::string_view name, std::uint64_t index) {
  XorShift64Star rng(seed ^ fnv1a64(name));
  rng.discard(index);
  return rng.next_unit();
}

}  // namespace duet
