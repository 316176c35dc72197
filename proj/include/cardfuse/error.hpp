// Copyright 2026 The Cardfuse Authors.
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

#ifndef CARDFUSE_ERROR_HPP_
#define CARDFUSE_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cardfuse {

enum class ErrorKind {
  kShape,      // operand dimensions disagree
  kParse,      // malformed manifest / checkpoint header
  kSize,       // blob length disagrees with manifest
  kData,       // non-finite values, bad labels
  kParameter,  // invalid argument value (k > n, fraction out of range, ...)
  kTraining,   // non-finite loss or gradient during optimization
  kContract,   // stale trace or other caller contract violation
  kIo,
};

inline const char* ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShape: return "shape error";
    case ErrorKind::kParse: return "parse error";
    case ErrorKind::kSize: return "size error";
    case ErrorKind::kData: return "data error";
    case ErrorKind::kParameter: return "parameter error";
    case ErrorKind::kTraining: return "training error";
    case ErrorKind::kContract: return "contract error";
    case ErrorKind::kIo: return "io error";
  }
  return "error";
}

// All library failures are reported through this exception; `kind()` lets
// callers (the CLI in particular) map failures onto exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(ErrorKindName(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline std::string ShapeString(std::size_t rows, std::size_t cols) {
  return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
}

inline std::string ShapeString(std::size_t len) {
  return "(" + std::to_string(len) + ")";
}

}  // namespace cardfuse

#endif  // CARDFUSE_ERROR_HPP_
