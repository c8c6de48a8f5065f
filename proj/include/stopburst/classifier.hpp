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

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stopburst/audio.hpp"

namespace stopburst {

// Anything that maps 16 kHz stop clips to P(burst = present). P(absent) is
// the complement. Implementations are immutable once built and must be safe
// to call from several threads at once.
class ClassifierBackend {
 public:
  virtual ~ClassifierBackend() = default;

  virtual std::string name() const = 0;
  virtual int expected_sample_rate() const = 0;
  // One probability per clip, in input order. An empty batch yields an empty
  // result.
  virtual std::vector<double> classify_batch(std::span<const audio::AudioClip> clips) const = 0;
};

// "baseline:<model.json>" or "neural:<model.onnx>". Throws LoadError /
// NotFound when the model cannot be loaded, ValidationError for an unknown
// scheme.
std::unique_ptr<ClassifierBackend> open_backend(const std::string& spec);

}  // namespace stopburst
