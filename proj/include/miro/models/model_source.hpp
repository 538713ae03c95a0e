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

#include <cstddef>
#include <memory>
#include <span>
#include <string>

#include "miro/decoding.hpp"

namespace miro {

/// A source of next-token distributions over a fixed vocabulary.
///
/// `next_distribution` returns the full conditional distribution, sorted
/// descending, for the given prefix, or nullptr once the source has nothing
/// more to say (end of a recorded stream). Same prefix, same distribution.
class ModelSource {
 public:
  virtual ~ModelSource() = default;

  virtual std::size_t n_vocab() const = 0;

  virtual std::shared_ptr<const TokenDistribution> next_distribution(
      std::span<const TokenId> prefix) = 0;

  /// True when concurrent calls from several threads are safe.
  virtual bool thread_safe() const { return false; }

  virtual std::string name() const = 0;
};

}  // namespace miro
