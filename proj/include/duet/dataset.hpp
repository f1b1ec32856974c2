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

// Input tensors for `input(name)`: either a JSON-lines file consumed per name
// in file order, or deterministic pseudo-random tensors.

#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "duet/error.hpp"
#include "duet/prng.hpp"
#include "duet/tensor.hpp"
#include "duet/value.hpp"
#include "json.hpp"

namespace duet {

// Tensor for the `occurrence`-th read of `name`: element e is 2u-1 where u
// is draw e of xorshift64* seeded with seed ^ fnv(name) ^ occurrence*gamma.
inline Tensor synthetic_tensor(std::uint64_t seed, const std::string& name, std::uint64_t occurrence,
                               const Shape& shape) {
  XorShift64Star rng(seed ^ fnv1a64(name) ^ (occurrence * kGoldenGamma));
  std::vector<double> data(static_cast<std::size_t>(num_elements(shape)));
  for (auto& x : data) x = 2.0 * rng.next_unit() - 1.0;
  return Tensor(shape, std::move(data));
}

class Dataset {
 public:
  static Dataset synthetic(std::uint64_t seed) {
    Dataset d;
    d.seed_ = seed;
    return d;
  }

  static Dataset from_jsonl(const std::string& text) {
    Dataset d;
    auto file = std::make_shared<std::map<std::string, std::vector<TensorPtr>>>();
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        auto j = nlohmann::json::parse(line);
        auto shape = j.at("shape").get<Shape>();
        auto data = j.at("data").get<std::vector<double>>();
        (*file)[j.at("name").get<std::string>()].push_back(std::make_shared<const Tensor>(shape, std::move(data)));
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::kRuntimeError, "dataset line " + std::to_string(lineno) + ": " + e.what());
      } catch (Error& e) {
        fail(e.code(), "dataset line " + std::to_string(lineno) + ": " + e.message());
      }
    }
    d.file_ = std::move(file);
    return d;
  }

  static Dataset from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail(ErrorCode::kRuntimeError, "cannot open dataset '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return from_jsonl(ss.str());
  }

  bool is_synthetic() const { return !file_; }

  // Next tensor for `name`. A requested shape must match file tensors and
  // gives the shape of synthetic ones (scalar when absent).
  TensorPtr next(const std::string& name, const std::optional<Shape>& shape) {
    std::int64_t occ = cursors_[name]++;
    if (!file_) {
      return std::make_shared<const Tensor>(
          synthetic_tensor(seed_, name, static_cast<std::uint64_t>(occ), shape.value_or(Shape{})));
    }
    auto it = file_->find(name);
    if (it == file_->end()) fail(ErrorCode::kUnknownInput, "dataset has no input named '" + name + "'");
    if (static_cast<std::size_t>(occ) >= it->second.size()) {
      fail(ErrorCode::kDatasetExhausted, "input '" + name + "' exhausted after " + std::to_string(occ) + " reads");
    }
    TensorPtr t = it->second[static_cast<std::size_t>(occ)];
    if (shape && *shape != t->shape) {
      fail(ErrorCode::kShapeMismatch,
           "input '" + name + "' has shape " + shape_to_string(t->shape) + ", expected " + shape_to_string(*shape));
    }
    return t;
  }

  const std::map<std::string, std::int64_t>& cursors() const { return cursors_; }

 private:
  std::uint64_t seed_ = 0;
  std::shared_ptr<const std::map<std::string, std::vector<TensorPtr>>> file_;
  std::map<std::string, std::int64_t> cursors_;
};

}  // namespace duet
