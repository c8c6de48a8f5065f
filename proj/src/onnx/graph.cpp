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

#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "onnx.pb.h"
#include "onnx/ir.hpp"
#include "stopburst/error.hpp"

namespace stopburst::onnx {

std::string_view to_string(DType t) noexcept {
  switch (t) {
    case DType::f32: return "float";
    case DType::i64: return "int64";
    case DType::boolean: return "bool";
  }
  return "?";
}

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

Tensor Tensor::floats(Shape shape, std::vector<float> data) {
  Tensor t;
  t.dtype = DType::f32;
  t.shape = std::move(shape);
  t.f = std::move(data);
  return t;
}

Tensor Tensor::ints(Shape shape, std::vector<std::int64_t> data) {
  Tensor t;
  t.dtype = DType::i64;
  t.shape = std::move(shape);
  t.i = std::move(data);
  return t;
}

Tensor Tensor::bools(Shape shape, std::vector<std::int64_t> data) {
  Tensor t = ints(std::move(shape), std::move(data));
  t.dtype = DType::boolean;
  return t;
}

std::int64_t Node::attr_int(const std::string& key, std::int64_t fallback) const {
  const Attribute* a = attr(key);
  return a ? a->i : fallback;
}

float Node::attr_float(const std::string& key, float fallback) const {
  const Attribute* a = attr(key);
  return a ? a->f : fallback;
}

std::string Node::attr_string(const std::string& key, const std::string& fallback) const {
  const Attribute* a = attr(key);
  return a ? a->s : fallback;
}

std::optional<std::vector<std::int64_t>> Node::attr_ints(const std::string& key) const {
  const Attribute* a = attr(key);
  if (!a) return std::nullopt;
  return a->ints;
}

namespace {

template <typename T>
std::vector<T> from_raw(const std::string& raw, std::size_t n, const std::string& name) {
  if (raw.size() != n * sizeof(T)) {
    throw LoadError("tensor '" + name + "': raw_data holds " + std::to_string(raw.size()) + " bytes, expected " +
                    std::to_string(n * sizeof(T)));
  }
  std::vector<T> out(n);
  if (n) std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

void check_count(std::size_t got, std::size_t want, const std::string& name) {
  if (got != want) {
    throw LoadError("tensor '" + name + "' has " + std::to_string(got) + " values for " + std::to_string(want) +
                    " elements");
  }
}

Tensor convert_tensor(const ::onnx::TensorProto& p) {
  const std::string& name = p.name();
  if (p.data_location() == ::onnx::TensorProto::EXTERNAL || p.external_data_size() > 0) {
    throw UnsupportedFormat("tensor '" + name + "' uses external data, which is not supported");
  }
  Shape shape(p.dims().begin(), p.dims().end());
  for (auto d : shape) {
    if (d < 0) throw LoadError("tensor '" + name + "' has a negative dimension");
  }
  const std::size_t n = element_count(shape);
  const bool raw = p.has_raw_data();
  switch (p.data_type()) {
    case ::onnx::TensorProto::FLOAT: {
      std::vector<float> v = raw ? from_raw<float>(p.raw_data(), n, name)
                                 : std::vector<float>(p.float_data().begin(), p.float_data().end());
      check_count(v.size(), n, name);
      return Tensor::floats(std::move(shape), std::move(v));
    }
    case ::onnx::TensorProto::DOUBLE: {
      std::vector<double> d = raw ? from_raw<double>(p.raw_data(), n, name)
                                  : std::vector<double>(p.double_data().begin(), p.double_data().end());
      check_count(d.size(), n, name);
      return Tensor::floats(std::move(shape), std::vector<float>(d.begin(), d.end()));
    }
    case ::onnx::TensorProto::INT64: {
      std::vector<std::int64_t> v = raw ? from_raw<std::int64_t>(p.raw_data(), n, name)
                                        : std::vector<std::int64_t>(p.int64_data().begin(), p.int64_data().end());
      check_count(v.size(), n, name);
      return Tensor::ints(std::move(shape), std::move(v));
    }
    case ::onnx::TensorProto::INT32: {
      std::vector<std::int32_t> v = raw ? from_raw<std::int32_t>(p.raw_data(), n, name)
                                        : std::vector<std::int32_t>(p.int32_data().begin(), p.int32_data().end());
      check_count(v.size(), n, name);
      return Tensor::ints(std::move(shape), std::vector<std::int64_t>(v.begin(), v.end()));
    }
    case ::onnx::TensorProto::BOOL: {
      std::vector<std::int64_t> out;
      if (raw) {
        for (unsigned char c : from_raw<unsigned char>(p.raw_data(), n, name)) out.push_back(c != 0);
      } else {
        for (auto v : p.int32_data()) out.push_back(v != 0);
      }
      check_count(out.size(), n, name);
      return Tensor::bools(std::move(shape), std::move(out));
    }
    default:
      throw UnsupportedFormat("tensor '" + name + "' has unsupported element type " +
                              std::to_string(p.data_type()));
  }
}

DType convert_elem_type(int t, const std::string& name) {
  switch (t) {
    case ::onnx::TensorProto::FLOAT:
    case ::onnx::TensorProto::DOUBLE: return DType::f32;
    case ::onnx::TensorProto::INT64:
    case ::onnx::TensorProto::INT32: return DType::i64;
    case ::onnx::TensorProto::BOOL: return DType::boolean;
    default:
      throw UnsupportedFormat("value '" + name + "' has unsupported element type " + std::to_string(t));
  }
}

ValueInfo convert_value_info(const ::onnx::ValueInfoProto& v) {
  ValueInfo out;
  out.name = v.name();
  if (!v.has_type() || !v.type().has_tensor_type()) {
    throw UnsupportedFormat("value '" + v.name() + "' is not a tensor");
  }
  const auto& tt = v.type().tensor_type();
  out.dtype = convert_elem_type(tt.elem_type(), v.name());
  if (tt.has_shape()) {
    out.has_shape = true;
    for (const auto& d : tt.shape().dim()) out.dims.push_back(d.has_dim_value() ? d.dim_value() : -1);
  }
  return out;
}

Attribute convert_attribute(const ::onnx::AttributeProto& a) {
  Attribute out;
  using AP = ::onnx::AttributeProto;
  switch (a.type()) {
    case AP::FLOAT: out.kind = Attribute::Kind::f; out.f = a.f(); break;
    case AP::INT: out.kind = Attribute::Kind::i; out.i = a.i(); break;
    case AP::STRING: out.kind = Attribute::Kind::s; out.s = a.s(); break;
    case AP::TENSOR:
      out.kind = Attribute::Kind::t;
      out.t = std::make_shared<const Tensor>(convert_tensor(a.t()));
      break;
    case AP::FLOATS:
      out.kind = Attribute::Kind::floats;
      out.floats.assign(a.floats().begin(), a.floats().end());
      break;
    case AP::INTS:
      out.kind = Attribute::Kind::ints;
      out.ints.assign(a.ints().begin(), a.ints().end());
      break;
    case AP::STRINGS: out.kind = Attribute::Kind::strings; break;
    default:
      throw UnsupportedFormat("attribute '" + a.name() + "' has unsupported type " + std::to_string(a.type()));
  }
  return out;
}

}  // namespace

Graph Graph::parse(std::string_view bytes) {
  ::onnx::ModelProto model;
  if (!model.ParseFromArray(bytes.data(), static_cast<int>(bytes.size()))) {
    throw LoadError("not a valid ONNX model (protobuf parse failed)");
  }
  if (!model.has_graph()) throw LoadError("ONNX model has no graph");

  auto impl = std::make_shared<Impl>();
  for (const auto& op : model.opset_import()) {
    if (op.domain().empty() || op.domain() == "ai.onnx") impl->opset = op.version();
  }
  if (impl->opset == 0) throw LoadError("ONNX model does not import the default operator set");

  const auto& g = model.graph();
  std::unordered_map<std::string, int> slots;
  auto slot_of = [&](const std::string& name) {
    auto [it, inserted] = slots.emplace(name, static_cast<int>(impl->slot_names.size()));
    if (inserted) impl->slot_names.push_back(name);
    return it->second;
  };

  std::set<std::string> available;
  for (const auto& init : g.initializer()) {
    int s = slot_of(init.name());
    impl->initializers[s] = std::make_shared<const Tensor>(convert_tensor(init));
    available.insert(init.name());
  }
  for (const auto& in : g.input()) {
    if (available.count(in.name())) continue;  // initializer listed as input
    impl->inputs.push_back(convert_value_info(in));
    impl->input_slots.push_back(slot_of(in.name()));
    available.insert(in.name());
  }

  std::set<std::string> unsupported;
  for (const auto& np : g.node()) {
    if (!(np.domain().empty() || np.domain() == "ai.onnx")) {
      unsupported.insert(np.domain() + "." + np.op_type());
      continue;
    }
    Node node;
    node.name = np.name();
    node.op_type = np.op_type();
    node.opset = impl->opset;
    node.kernel = find_kernel(np.op_type());
    if (!node.kernel) unsupported.insert(np.op_type());
    for (const auto& in : np.input()) {
      if (in.empty()) {
        node.inputs.push_back(-1);
        continue;
      }
      if (!available.count(in)) {
        throw LoadError("node '" + np.name() + "' (" + np.op_type() + ") reads '" + in +
                        "' before it is produced; graph is not topologically sorted");
      }
      node.inputs.push_back(slot_of(in));
    }
    for (const auto& out : np.output()) {
      if (out.empty()) {
        node.outputs.push_back(-1);
        continue;
      }
      node.outputs.push_back(slot_of(out));
      available.insert(out);
    }
    for (const auto& a : np.attribute()) node.attributes.emplace(a.name(), convert_attribute(a));
    impl->nodes.push_back(std::move(node));
  }
  if (!unsupported.empty()) {
    std::string list;
    for (const auto& op : unsupported) list += (list.empty() ? "" : ", ") + op;
    throw UnsupportedFormat("ONNX model uses unsupported operators: " + list);
  }

  for (const auto& out : g.output()) {
    if (!available.count(out.name())) throw LoadError("graph output '" + out.name() + "' is never produced");
    ValueInfo info;
    info.name = out.name();
    if (out.has_type() && out.type().has_tensor_type()) info = convert_value_info(out);
    impl->outputs.push_back(std::move(info));
    impl->output_slots.push_back(slot_of(out.name()));
  }

  impl->slot_count = impl->slot_names.size();
  impl->last_use.assign(impl->slot_count, -1);
  for (std::size_t k = 0; k < impl->nodes.size(); ++k) {
    for (int s : impl->nodes[k].inputs) {
      if (s >= 0) impl->last_use[s] = static_cast<int>(k);
    }
  }
  // Graph outputs must survive to the end.
  for (int s : impl->output_slots) impl->last_use[s] = static_cast<int>(impl->nodes.size());
  return Graph(std::move(impl));
}

Graph Graph::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("cannot open model file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse(buffer.str());
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  } catch (const UnsupportedFormat& e) {
    throw UnsupportedFormat(path.string() + ": " + e.what());
  }
}

const std::vector<ValueInfo>& Graph::inputs() const { return impl_->inputs; }
const std::vector<ValueInfo>& Graph::outputs() const { return impl_->outputs; }
std::int64_t Graph::opset() const { return impl_->opset; }
std::size_t Graph::node_count() const { return impl_->nodes.size(); }

namespace {

std::string shape_text(const Shape& s) {
  std::string out = "[";
  for (std::size_t k = 0; k < s.size(); ++k) out += (k ? ", " : "") + std::to_string(s[k]);
  return out + "]";
}

void check_feed(const ValueInfo& info, const Tensor& t) {
  if (t.dtype != info.dtype) {
    throw ValidationError("input '" + info.name + "' expects " + std::string(to_string(info.dtype)) + ", got " +
                          std::string(to_string(t.dtype)));
  }
  const std::size_t n = t.size();
  if ((t.dtype == DType::f32 ? t.f.size() : t.i.size()) != n) {
    throw ValidationError("input '" + info.name + "' data does not match shape " + shape_text(t.shape));
  }
  if (!info.has_shape) return;
  if (info.dims.size() != t.shape.size()) {
    throw ValidationError("input '" + info.name + "' expects rank " + std::to_string(info.dims.size()) +
                          ", got shape " + shape_text(t.shape));
  }
  for (std::size_t k = 0; k < info.dims.size(); ++k) {
    if (info.dims[k] >= 0 && info.dims[k] != t.shape[k]) {
      throw ValidationError("input '" + info.name + "' expects shape " + shape_text(info.dims) + ", got " +
                            shape_text(t.shape));
    }
  }
}

}  // namespace

std::vector<Tensor> Graph::run(const std::map<std::string, Tensor>& feeds) const {
  const Impl& g = *impl_;
  // Values are shared so initializers and pass-through ops need no copies.
  std::vector<std::shared_ptr<const Tensor>> values(g.slot_count);
  for (const auto& [slot, t] : g.initializers) values[slot] = t;
  for (std::size_t k = 0; k < g.inputs.size(); ++k) {
    auto it = feeds.find(g.inputs[k].name);
    if (it == feeds.end()) throw ValidationError("missing input '" + g.inputs[k].name + "'");
    check_feed(g.inputs[k], it->second);
    values[g.input_slots[k]] = std::make_shared<const Tensor>(it->second);
  }

  std::vector<const Tensor*> args;
  std::vector<Tensor> results;
  for (std::size_t k = 0; k < g.nodes.size(); ++k) {
    const Node& node = g.nodes[k];
    args.clear();
    for (int s : node.inputs) args.push_back(s >= 0 ? values[s].get() : nullptr);
    results.assign(node.outputs.size(), Tensor{});
    try {
      node.kernel(node, args, results);
    } catch (const std::exception& e) {
      throw BackendFault("node '" + node.name + "' (" + node.op_type + "): " + e.what());
    }
    for (std::size_t o = 0; o < node.outputs.size(); ++o) {
      if (node.outputs[o] >= 0) values[node.outputs[o]] = std::make_shared<const Tensor>(std::move(results[o]));
    }
    for (int s : node.inputs) {
      if (s >= 0 && g.last_use[s] == static_cast<int>(k) && !g.initializers.count(s)) values[s].reset();
    }
  }

  std::vector<Tensor> out;
  for (int s : g.output_slots) out.push_back(*values[s]);
  return out;
}

}  // namespace stopburst::onnx
