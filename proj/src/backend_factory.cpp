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

#include "stopburst/baseline.hpp"
#include "stopburst/classifier.hpp"
#include "stopburst/error.hpp"
#include "stopburst/neural.hpp"

namespace stopburst {

std::unique_ptr<ClassifierBackend> open_backend(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos || colon + 1 == spec.size()) {
    throw ValidationError("backend must be 'baseline:<model.json>' or 'neural:<model.onnx>', got '" + spec + "'");
  }
  const std::string scheme = spec.substr(0, colon);
  const std::filesystem::path path = spec.substr(colon + 1);
  if (scheme == "baseline") return std::make_unique<baseline::BaselineBackend>(baseline::load_model(path));
  if (scheme == "neural") return neural::NeuralModel::load(path);
  throw ValidationError("unknown backend scheme '" + scheme + "' (expected baseline or neural)");
}

}  // namespace stopburst
