// Copyright 2026 The stopburst Authors.
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
#include <utility>
#include <vector>

namespace stopburst {

// Counter-based generator: draw i is a pure function of (key, i), where the
// key mixes the user seed with a stream name. Two operations seeded with the
// same value but different stream names never share a sequence.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::string_view stream);

  // The raw draw at an explicit counter position; does not advance.
  std::uint64_t at(std::uint64_t counter) const noexcept;

  std::uint64_t next() noexcept { return at(counter_++); }

  // Uniform on [0, 1) with 53 bits of mantissa.
  double uniform() noexcept;

  // Uniform integer on [0, bound); bound must be positive.
  std::uint64_t below(std::uint64_t bound) noexcept;

  double normal() noexcept;

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t position() const noexcept { return counter_; }

  // Fisher-Yates over the whole range.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// FNV-1a; used to fold stream names into keys.
std::uint64_t hash_name(std::string_view name) noexcept;

}  // namespace stopburst
