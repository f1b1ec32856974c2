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
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace duet {

enum class ErrorCode {
  kShapeMismatch,
  kBadAttrs,
  kLexError,
  kParseError,
  kValidationError,
  kRuntimeError,
  kDatasetExhausted,
  kUnknownInput,
  kUnknownNative,
  kNativeArity,
  kNativeFailure,
  kMalformedTrace,
  kBudgetExceeded,
  kExplosionGuard,
  kDecisionMismatch,
  kChannelClosed,
  kInFlightPass,
  kInternal,
};

inline std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kBadAttrs: return "BadAttrs";
    case ErrorCode::kLexError: return "LexError";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kValidationError: return "ValidationError";
    case ErrorCode::kRuntimeError: return "RuntimeError";
    case ErrorCode::kDatasetExhausted: return "DatasetExhausted";
    case ErrorCode::kUnknownInput: return "UnknownInput";
    case ErrorCode::kUnknownNative: return "UnknownNative";
    case ErrorCode::kNativeArity: return "NativeArityError";
    case ErrorCode::kNativeFailure: return "NativeFailure";
    case ErrorCode::kMalformedTrace: return "MalformedTrace";
    case ErrorCode::kBudgetExceeded: return "BudgetExceeded";
    case ErrorCode::kExplosionGuard: return "ExplosionGuard";
    case ErrorCode::kDecisionMismatch: return "DecisionMismatch";
    case ErrorCode::kChannelClosed: return "ChannelClosed";
    case ErrorCode::kInFlightPass: return "InFlightPass";
    case ErrorCode::kInternal: return "InternalError";
  }
  return "Unknown";
}

// Single exception type for the whole library. Location fields are filled in
// as the error propagates outwards (lexer/parser set line/col, the
// interpreter adds the step index).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code), message_(message) {}

  ErrorCode code() const { return code_; }
  const std::string& message() const { return message_; }

  std::optional<int> line;
  std::optional<int> column;
  std::optional<std::int64_t> step;
  std::optional<std::string> phase;

  // Rendered as "<Code> [step N] [line:col]: message".
  std::string describe() const {
    std::string out(error_code_name(code_));
    if (phase) out += " [phase " + *phase + "]";
    if (step) out += " [step " + std::to_string(*step) + "]";
    if (line) {
      out += " [" + std::to_string(*line);
      if (column) out += ":" + std::to_string(*column);
      out += "]";
    }
    out += ": " + message_;
    return out;
  }

  // True for errors the CLI reports as usage/parse failures (exit 2).
  bool is_static() const {
    return code_ == ErrorCode::kLexError || code_ == ErrorCode::kParseError ||
           code_ == ErrorCode::kValidationError;
  }

 private:
  ErrorCode code_;
  std::string message_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace duet
