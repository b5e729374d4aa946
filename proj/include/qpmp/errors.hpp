// Copyright 2026 The qpmp Authors
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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qpmp {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Non-finite entries or a failed numerical kernel.
class NumericError : public Error {
 public:
  using Error::Error;
};

class NotPsdError : public Error {
 public:
  using Error::Error;
};

/// Eigenvalues too close for the Cayley-Hamilton square-root expansion.
class DegenerateSpectrumError : public Error {
 public:
  using Error::Error;
};

class InvalidStateError : public Error {
 public:
  using Error::Error;
};

class PropagationError : public Error {
 public:
  PropagationError(std::size_t step, const std::string& what)
      : Error("propagation failed at step " + std::to_string(step) + ": " + what), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

/// Configuration problems; carries the offending field and, when known, the input line.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what, int line = 0)
      : Error(format(field, what, line)), field_(std::move(field)), line_(line) {}

  const std::string& field() const noexcept { return field_; }
  int line() const noexcept { return line_; }

 private:
  static std::string format(const std::string& field, const std::string& what, int line) {
    std::string msg;
    if (line > 0) msg += "line " + std::to_string(line) + ": ";
    if (!field.empty()) msg += "'" + field + "': ";
    return msg + what;
  }

  std::string field_;
  int line_;
};

}  // namespace qpmp
