// Copyright 2026 The mdlab Authors.
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

#include <stdexcept>
#include <string>

namespace mdlab {

// Failure categories. Each maps onto one CLI exit code.
enum class ErrorKind {
  kConfig,     // invalid arguments, files, or specs (exit 2)
  kNumerical,  // diverged or non-finite computations (exit 3)
  kOracle,     // enumeration oracle found no consistent entry (exit 4)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept;

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

class EnumerationBudgetExceeded : public Error {
 public:
  explicit EnumerationBudgetExceeded(const std::string& what)
      : Error(ErrorKind::kConfig, what) {}
};

class LengthExceeded : public Error {
 public:
  explicit LengthExceeded(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

class NoConsistentEntry : public Error {
 public:
  explicit NoConsistentEntry(const std::string& what) : Error(ErrorKind::kOracle, what) {}
};

class DegenerateSchedule : public Error {
 public:
  explicit DegenerateSchedule(const std::string& what)
      : Error(ErrorKind::kNumerical, what) {}
};

class DegenerateWeight : public Error {
 public:
  explicit DegenerateWeight(const std::string& what)
      : Error(ErrorKind::kNumerical, what) {}
};

class NonfiniteLoss : public Error {
 public:
  explicit NonfiniteLoss(const std::string& what) : Error(ErrorKind::kNumerical, what) {}
};

class DivergedLoss : public Error {
 public:
  explicit DivergedLoss(const std::string& what) : Error(ErrorKind::kNumerical, what) {}
};

class PolicyStalled : public Error {
 public:
  explicit PolicyStalled(const std::string& what) : Error(ErrorKind::kNumerical, what) {}
};

class ZeroProbability : public Error {
 public:
  explicit ZeroProbability(const std::string& what)
      : Error(ErrorKind::kNumerical, what) {}
};

}  // namespace mdlab
