// Copyright 2026 The miro Authors. All Rights Reserved.
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

namespace miro {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument lies outside the domain where an operation is defined
/// (an exponent outside a theorem's validity range, a rank past N, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A distribution or logit vector violates its structural invariants.
class InvalidDistribution : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk data (replay files, compressed streams, corpora).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A model source failed to produce a distribution. `step()` is the index of
/// the generation step that failed, or -1 when not tied to a step.
class ModelIoError : public Error {
 public:
  explicit ModelIoError(const std::string& what, long step = -1)
      : Error(step >= 0 ? "step " + std::to_string(step) + ": " + what : what),
        step_(step) {}

  long step() const noexcept { return step_; }

 private:
  long step_;
};

/// Bad experiment configuration (CLI flags, config files, policy strings).
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace miro
