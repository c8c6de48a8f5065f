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
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace stopburst::onnx {

// Element types the interpreter computes with. INT32 data is widened to
// int64 on load; DOUBLE is narrowed to float.
enum class DType { f32, i64, boolean };

std::string_view to_string(DType t) noexcept;

using Shape = std::vector<std::int64_t>;

std::size_t element_count(const Shape& shape);

// Dense row-major tensor. Floats live in `f`; int64 and bool elements in `i`
// (bools as 0/1).
struct Tensor {
  DType dtype = DType::f32;
  Shape shape;
  std::vector<float> f;
  std::vector<std::int64_t> i;

  std::size_t size() const { return element_count(shape); }

  static Tensor floats(Shape shape, std::vector<float> data);
  static Tensor ints(Shape shape, std::vector<std::int64_t> data);
  static Tensor bools(Shape shape, std::vector<std::int64_t> data);
};

// Declared graph input/output. Unknown or symbolic dims are -1; has_shape
// is false when the model does not declare a rank at all.
struct ValueInfo {
  std::string name;
  DType dtype = DType::f32;
  bool has_shape = false;
  Shape dims;
};

// A loaded inference graph over the default ONNX operator domain. Covers the
// operators that transformer and conv-frontend audio classifiers export to
// (elementwise math, MatMul/Gemm, 1-D Conv, normalizations, softmax,
// reductions and the shape-manipulation ops around them); anything else is
// rejected at load time with UnsupportedFormat listing the missing ops.
//
// Immutable after load; run() is const and may be called concurrently.
class Graph {
 public:
  // Throws NotFound for a missing file, LoadError for malformed protobuf or
  // graph structure, UnsupportedFormat for unsupported ops or data types.
  static Graph load(const std::filesystem::path& path);
  static Graph parse(std::string_view bytes);

  const std::vector<ValueInfo>& inputs() const;
  const std::vector<ValueInfo>& outputs() const;
  std::int64_t opset() const;
  std::size_t node_count() const;

  // Feeds must cover every graph input with matching dtype and any fixed
  // dims. Returns outputs in declaration order. Throws ValidationError for
  // bad feeds and BackendFault if a node fails.
  std::vector<Tensor> run(const std::map<std::string, Tensor>& feeds) const;

  struct Impl;

 private:
  explicit Graph(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<const Impl> impl_;
};

}  // namespace stopburst::onnx
