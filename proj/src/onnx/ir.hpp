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

// Protobuf-free representation of a loaded graph, shared by the loader and
// the operator kernels.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stopburst/onnx_graph.hpp"

namespace stopburst::onnx {

struct Attribute {
  enum class Kind { f, i, s, t, floats, ints, strings };
  Kind kind = Kind::i;
  float f = 0.0f;
  std::int64_t i = 0;
  std::string s;
  std::shared_ptr<const Tensor> t;
  std::vector<float> floats;
  std::vector<std::int64_t> ints;
};

struct Node;

// Kernel signature. `in` has one entry per declared input, nullptr for
// omitted optional inputs. `out` is pre-sized to the declared outputs.
using Kernel = void (*)(const Node& node, std::span<const Tensor* const> in, std::vector<Tensor>& out);

struct Node {
  std::string name;
  std::string op_type;
  std::vector<int> inputs;   // value slots, -1 for omitted optionals
  std::vector<int> outputs;  // value slots, -1 for omitted optionals
  std::map<std::string, Attribute> attributes;
  std::int64_t opset = 0;
  Kernel kernel = nullptr;

  const Attribute* attr(const std::string& key) const {
    auto it = attributes.find(key);
    return it == attributes.end() ? nullptr : &it->second;
  }
  std::int64_t attr_int(const std::string& key, std::int64_t fallback) const;
  float attr_float(const std::string& key, float fallback) const;
  std::string attr_string(const std::string& key, const std::string& fallback) const;
  std::optional<std::vector<std::int64_t>> attr_ints(const std::string& key) const;
};

// Kernel for an op type, or nullptr if unsupported.
Kernel find_kernel(const std::string& op_type);

struct Graph::Impl {
  std::int64_t opset = 0;
  std::vector<ValueInfo> inputs;
  std::vector<ValueInfo> outputs;
  std::vector<int> input_slots;
  std::vector<int> output_slots;
  std::size_t slot_count = 0;
  std::vector<std::string> slot_names;
  // slot -> initializer / Constant-free value available before execution.
  std::map<int, std::shared_ptr<const Tensor>> initializers;
  std::vector<Node> nodes;
  // Index of the last node reading each slot (-1 if never read).
  std::vector<int> last_use;
};

}  // namespace stopburst::onnx
