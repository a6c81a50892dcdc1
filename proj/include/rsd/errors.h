// Copyright (c) the resynth-detect Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef RSD_ERRORS_H_
#define RSD_ERRORS_H_

#include <stdexcept>
#include <string>

namespace rsd {

// Base of every error thrown by the library. `kind()` is a stable
// machine-readable tag used by the CLI error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io_error", what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error("format_error", what) {}
};

class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& what)
      : Error("argument_error", what) {}
};

class ContractViolation : public Error {
 public:
  explicit ContractViolation(const std::string& what)
      : Error("contract_violation", what) {}
};

class IncompatibleVersion : public Error {
 public:
  explicit IncompatibleVersion(const std::string& what)
      : Error("incompatible_version", what) {}
};

class KindMismatch : public Error {
 public:
  explicit KindMismatch(const std::string& what)
      : Error("kind_mismatch", what) {}
};

class TrainingDiverged : public Error {
 public:
  explicit TrainingDiverged(const std::string& what)
      : Error("training_diverged", what) {}
};

#define RSD_REQUIRE(cond, msg)                        \
  do {                                                \
    if (!(cond)) throw ::rsd::ArgumentError(msg);     \
  } while (0)

}  // namespace rsd

#endif  // RSD_ERRORS_H_
