// Copyright 2026 The migrl Authors.
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

#ifndef MIGRL_ERROR_HPP_
#define MIGRL_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace migrl {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data. Carries the 1-based line number when the data came
// from a line-delimited file (0 otherwise).
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Missing or inconsistent configuration (bad flags, runner not found, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Failure to read or write a file; the message names the path.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace migrl

#endif  // MIGRL_ERROR_HPP_
