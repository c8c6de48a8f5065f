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

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include <Eigen/Dense>

#include "onnx/ir.hpp"

namespace stopburst::onnx {

namespace {

using std::int64_t;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::string shape_text(const Shape& s) {
  std::string out = "[";
  for (std::size_t k = 0; k < s.size(); ++k) out += (k ? ", " : "") + std::to_string(s[k]);
  return out + "]";
}

const Tensor& need(std::span<const Tensor* const> in, std::size_t k) {
  if (k >= in.size() || !in[k]) fail("missing input " + std::to_string(k));
  return *in[k];
}

const Tensor* opt(std::span<const Tensor* const> in, std::size_t k) { return k < in.size() ? in[k] : nullptr; }

void need_float(const Tensor& t, const char* what) {
  if (t.dtype != DType::f32) fail(std::string(what) + " must be float");
}

int64_t normalize_axis(int64_t axis, std::size_t rank) {
  const auto r = static_cast<int64_t>(rank);
  if (axis < -r || axis >= r) fail("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  return axis < 0 ? axis + r : axis;
}

std::vector<int64_t> int_values(const Tensor& t) {
  if (t.dtype != DType::i64) fail("expected an int64 tensor");
  return t.i;
}

double scalar_value(const Tensor& t) {
  if (t.size() != 1) fail("expected a scalar");
  return t.dtype == DType::f32 ? static_cast<double>(t.f[0]) : static_cast<double>(t.i[0]);
}

std::vector<int64_t> strides_of(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (int k = static_cast<int>(s.size()) - 2; k >= 0; --k) st[k] = st[k + 1] * s[k + 1];
  return st;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t k = 0; k < r; ++k) {
    int64_t da = k < r - a.size() ? 1 : a[k - (r - a.size())];
    int64_t db = k < r - b.size() ? 1 : b[k - (r - b.size())];
    if (da != db && da != 1 && db != 1) fail("cannot broadcast " + shape_text(a) + " with " + shape_text(b));
    out[k] = da == 1 ? db : da;
  }
  return out;
}

// For each element of `out`, the linear index of the element of a tensor
// with shape `in` that broadcasts onto it.
std::vector<std::size_t> broadcast_offsets(const Shape& in, const Shape& out) {
  const std::size_t n = element_count(out);
  std::vector<std::size_t> idx(n);
  const std::size_t r = out.size(), lead = r - in.size();
  auto in_st = strides_of(in);
  std::vector<int64_t> eff(r, 0);
  for (std::size_t k = 0; k < in.size(); ++k) eff[lead + k] = in[k] == 1 ? 0 : in_st[k];
  std::vector<int64_t> counter(r, 0);
  std::size_t pos = 0;
  for (std::size_t e = 0; e < n; ++e) {
    idx[e] = pos;
    for (int k = static_cast<int>(r) - 1; k >= 0; --k) {
      if (++counter[k] < out[k]) {
        pos += eff[k];
        break;
      }
      pos -= eff[k] * (out[k] - 1);
      counter[k] = 0;
    }
  }
  return idx;
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

// ---------------------------------------------------------------------------
// Elementwise

template <typename F>
void binary_float(const Tensor& a, const Tensor& b, Tensor& out, F fn) {
  Shape s = broadcast_shape(a.shape, b.shape);
  std::vector<float> y(element_count(s));
  if (same_shape(a.shape, s) && same_shape(b.shape, s)) {
    for (std::size_t e = 0; e < y.size(); ++e) y[e] = fn(a.f[e], b.f[e]);
  } else {
    auto ia = broadcast_offsets(a.shape, s), ib = broadcast_offsets(b.shape, s);
    for (std::size_t e = 0; e < y.size(); ++e) y[e] = fn(a.f[ia[e]], b.f[ib[e]]);
  }
  out = Tensor::floats(std::move(s), std::move(y));
}

template <typename F>
void binary_int(const Tensor& a, const Tensor& b, Tensor& out, F fn, DType result = DType::i64) {
  Shape s = broadcast_shape(a.shape, b.shape);
  auto ia = broadcast_offsets(a.shape, s), ib = broadcast_offsets(b.shape, s);
  std::vector<int64_t> y(ia.size());
  for (std::size_t e = 0; e < y.size(); ++e) y[e] = fn(a.i[ia[e]], b.i[ib[e]]);
  out = Tensor::ints(std::move(s), std::move(y));
  out.dtype = result;
}

template <typename F>
void compare(const Tensor& a, const Tensor& b, Tensor& out, F fn) {
  if (a.dtype != b.dtype) fail("comparison of mismatched types");
  Shape s = broadcast_shape(a.shape, b.shape);
  auto ia = broadcast_offsets(a.shape, s), ib = broadcast_offsets(b.shape, s);
  std::vector<int64_t> y(ia.size());
  for (std::size_t e = 0; e < y.size(); ++e) {
    // Integers compare exactly; doubles would lose precision past 2^53.
    y[e] = a.dtype == DType::f32 ? fn(a.f[ia[e]], b.f[ib[e]]) : fn(a.i[ia[e]], b.i[ib[e]]);
  }
  out = Tensor::bools(std::move(s), std::move(y));
}

enum class Arith { add, sub, mul, div };

template <Arith op>
void arith(const Node&, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  const Tensor& a = need(in, 0);
  const Tensor& b = need(in, 1);
  if (a.dtype != b.dtype) fail("operands have different element types");
  if (a.dtype == DType::f32) {
    binary_float(a, b, out[0], [](float x, float y) {
      if constexpr (op == Arith::add) return x + y;
      if constexpr (op == Arith::sub) return x - y;
      if constexpr (op == Arith::mul) return x * y;
      return x / y;
    });
  } else {
    binary_int(a, b, out[0], [](int64_t x, int64_t y) -> int64_t {
      if constexpr (op == Arith::add) return x + y;
      if constexpr (op == Arith::sub) return x - y;
      if constexpr (op == Arith::mul) return x * y;
      if (y == 0) fail("integer division by zero");
      return x / y;
    });
  }
}

void op_pow(const Node&, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  const Tensor& a = need(in, 0);
  const Tensor& b = need(in, 1);
  need_float(a, "Pow base");
  if (b.dtype == DType::f32) {
    binary_float(a, b, out[0], [](float x, float y) { return static_cast<float>(std::pow(x, y)); });
  } else {
    Tensor bf = Tensor::floats(b.shape, std::vector<float>(b.i.begin(), b.i.end()));
    binary_float(a, bf, out[0], [](float x, float y) { return static_cast<float>(std::pow(x, y)); });
  }
}

void op_mod(const Node& node, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  const Tensor& a = need(in, 0);
  const Tensor& b = need(in, 1);
  const bool fmod = node.attr_int("fmod", 0) != 0;
  if (a.dtype == DType::f32) {
    if (!fmod) fail("Mod on floats requires fmod=1");
    binary_float(a, b, out[0], [](float x, float y) { return std::fmod(x, y); });
  } else {
    binary_int(a, b, out[0], [fmod](int64_t x, int64_t y) -> int64_t {
      if (y == 0) fail("integer modulo by zero");
      int64_t r = x % y;
      if (!fmod && r != 0 && ((r < 0) != (y < 0))) r += y;
      return r;
    });
  }
}

template <bool is_max>
void op_minmax(const Node&, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  Tensor acc = need(in, 0);
  for (std::size_t k = 1; k < in.size(); ++k) {
    const Tensor& b = need(in, k);
    if (b.dtype != acc.dtype) fail("operands have different element types");
    Tensor next;
    if (acc.dtype == DType::f32) {
      binary_float(acc, b, next, [](float x, float y) {
        if (std::isnan(x) || std::isnan(y)) return std::numeric_limits<float>::quiet_NaN();
        return is_max ? std::max(x, y) : std::min(x, y);
      });
    } else {
      binary_int(acc, b, next, [](int64_t x, int64_t y) { return is_max ? std::max(x, y) : std::min(x, y); });
    }
    acc = std::move(next);
  }
  out[0] = std::move(acc);
}

template <typename F>
void unary_float(std::span<const Tensor* const> in, std::vector<Tensor>& out, F fn) {
  const Tensor& x = need(in, 0);
  need_float(x, "input");
  std::vector<float> y(x.f.size());
  for (std::size_t e = 0; e < y.size(); ++e) y[e] = fn(x.f[e]);
  out[0] = Tensor::floats(x.shape, std::move(y));
}

#define UNARY(NAME, EXPR)                                                                      \
  void NAME(const Node&, std::span<const Tensor* const> in, std::vector<Tensor>& out) {        \
    unary_float(in, out, [](float v) { return static_cast<float>(EXPR); });                    \
  }

UNARY(op_sqrt, std::sqrt(v))
UNARY(op_exp, std::exp(v))
UNARY(op_log, std::log(v))
UNARY(op_tanh, std::tanh(v))
UNARY(op_erf, std::erf(v))
UNARY(op_sigmoid, 1.0 / (1.0 + std::exp(-static_cast<double>(v))))
UNARY(op_relu, v > 0.0f ? v : 0.0f)
UNARY(op_reciprocal, 1.0f / v)
UNARY(op_floor, std::floor(v))
UNARY(op_ceil, std::ceil(v))
#undef UNARY

void op_neg(const Node&, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  const Tensor& x = need(in, 0);
  if (x.dtype == DType::f32) return unary_float(in, out, [](float v) { return -v; });
  std::vector<int64_t> y(x.i.size());
  for (std::size_t e = 0; e < y.size(); ++e) y[e] = -x.i[e];
  out[0] = Tensor::ints(x.shape, std::move(y));
}

void op_abs(const Node&, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  const Tensor& x = need(in, 0);
  if (x.dtype == DType::f32) return unary_float(in, out, [](float v) { return std::fabs(v); });
  std::vector<int64_t> y(x.i.size());
  for (std::size_t e = 0; e < y.size(); ++e) y[e] = x.i[e] < 0 ? -x.i[e] : x.i[e];
  out[0] = Tensor::ints(x.shape, std::move(y));
}

void op_gelu(const Node& node, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  if (node.attr_string("approximate", "none") == "tanh") {
    unary_float(in, out, [](float v) {
      const double x = v, c = std::sqrt(2.0 / M_PI);
      return static_cast<float>(0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x))));
    });
  } else {
    unary_float(in, out, [](float v) {
      const double x = v;
      return static_cast<float>(0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))));
    });
  }
}

void op_clip(const Node& node, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  const Tensor& x = need(in, 0);
  double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
  if (node.opset < 11) {
    lo = node.attr_float("min", -std::numeric_limits<float>::max());
    hi = node.attr_float("max", std::numeric_limits<float>::max());
  } else {
    if (const Tensor* t = opt(in, 1)) lo = scalar_value(*t);
    if (const Tensor* t = opt(in, 2)) hi = scalar_value(*t);
  }
  if (x.dtype == DType::f32) {
    std::vector<float> y(x.f.size());
    for (std::size_t e = 0; e < y.size(); ++e) {
      double v = x.f[e];
      y[e] = static_cast<float>(std::min(std::max(v, lo), hi));
    }
    out[0] = Tensor::floats(x.shape, std::move(y));
  } else {
    std::vector<int64_t> y(x.i.size());
    for (std::size_t e = 0; e < y.size(); ++e) {
      double v = static_cast<double>(x.i[e]);
      y[e] = static_cast<int64_t>(std::min(std::max(v, lo), hi));
    }
    out[0] = Tensor::ints(x.shape, std::move(y));
  }
}

// ---------------------------------------------------------------------------
// Logic

void op_equal(const Node&, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  compare(need(in, 0), need(in, 1), out[0], [](auto x, auto y) -> int64_t { return x == y; });
}
void op_greater(const Node&, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  compare(need(in, 0), need(in, 1), out[0], [](auto x, auto y) -> int64_t { return x > y; });
}
void op_less(const Node&, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  compare(need(in, 0), need(in, 1), out[0], [](auto x, auto y) -> int64_t { return x < y; });
}
void op_greater_equal(const Node&, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  compare(need(in, 0), need(in, 1), out[0], [](auto x, auto y) -> int64_t { return x >= y; });
}
void op_less_equal(const Node&, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  compare(need(in, 0), need(in, 1), out[0], [](auto x, auto y) -> int64_t { return x <= y; });
}

void op_not(const Node&, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  const Tensor& x = need(in, 0);
  std::vector<int64_t> y(x.i.size());
  for (std::size_t e = 0; e < y.size(); ++e) y[e] = !x.i[e];
  out[0] = Tensor::bools(x.shape, std::move(y));
}

void op_and(const Node&, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  binary_int(need(in, 0), need(in, 1), out[0], [](int64_t x, int64_t y) -> int64_t { return x && y; }, DType::boolean);
}

void op_or(const Node&, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  binary_int(need(in, 0), need(in, 1), out[0], [](int64_t x, int64_t y) -> int64_t { return x || y; }, DType::boolean);
}

void op_isnan(const Node&, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  const Tensor& x = need(in, 0);
  need_float(x, "IsNaN input");
  std::vector<int64_t> y(x.f.size());
  for (std::size_t e = 0; e < y.size(); ++e) y[e] = std::isnan(x.f[e]);
  out[0] = Tensor::bools(x.shape, std::move(y));
}

void op_where(const Node&, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  const Tensor& c = need(in, 0);
  const Tensor& a = need(in, 1);
  const Tensor& b = need(in, 2);
  if (a.dtype != b.dtype) fail("Where branches have different element types");
  Shape s = broadcast_shape(broadcast_shape(c.shape, a.shape), b.shape);
  auto ic = broadcast_offsets(c.shape, s), ia = broadcast_offsets(a.shape, s), ib = broadcast_offsets(b.shape, s);
  if (a.dtype == DType::f32) {
    std::vector<float> y(ic.size());
    for (std::size_t e = 0; e < y.size(); ++e) y[e] = c.i[ic[e]] ? a.f[ia[e]] : b.f[ib[e]];
    out[0] = Tensor::floats(std::move(s), std::move(y));
  } else {
    std::vector<int64_t> y(ic.size());
    for (std::size_t e = 0; e < y.size(); ++e) y[e] = c.i[ic[e]] ? a.i[ia[e]] : b.i[ib[e]];
    out[0] = Tensor::ints(std::move(s), std::move(y));
    out[0].dtype = a.dtype;
  }
}

// ---------------------------------------------------------------------------
// Shape manipulation

Tensor with_shape(const Tensor& x, Shape s) {
  if (element_count(s) != x.size()) fail("cannot reshape " + shape_text(x.shape) + " to " + shape_text(s));
  Tensor y = x;
  y.shape = std::move(s);
  return y;
}

void op_identity(const Node&, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  out[0] = need(in, 0);
  if (out.size() > 1) {
    // Dropout's optional mask: everything kept at inference.
    out[1] = Tensor::bools(out[0].shape, std::vector<int64_t>(out[0].size(), 1));
  }
}

void op_reshape(const Node& node, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  const Tensor& x = need(in, 0);
  auto target = int_values(need(in, 1));
  const bool allowzero = node.attr_int("allowzero", 0) != 0;
  Shape s(target.size());
  int infer = -1;
  int64_t known = 1;
  for (std::size_t k = 0; k < target.size(); ++k) {
    if (target[k] == 0 && !allowzero) {
      if (k >= x.shape.size()) fail("reshape copies a dimension the input does not have");
      s[k] = x.shape[k];
    } else if (target[k] == -1) {
      if (infer >= 0) fail("reshape with more than one -1");
      infer = static_cast<int>(k);
      continue;
    } else {
      s[k] = target[k];
    }
    known *= s[k];
  }
  if (infer >= 0) {
    if (known == 0 || static_cast<int64_t>(x.size()) % known != 0) {
      fail("cannot infer reshape of " + shape_text(x.shape) + " to " + shape_text(target));
    }
    s[infer] = static_cast<int64_t>(x.size()) / known;
  }
  out[0] = with_shape(x, std::move(s));
}

void op_flatten(const Node& node, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  const Tensor& x = need(in, 0);
  int64_t axis = node.attr_int("axis", 1);
  if (axis < 0) axis += static_cast<int64_t>(x.shape.size());
  if (axis < 0 || axis > static_cast<int64_t>(x.shape.size())) fail("Flatten axis out of range");
  int64_t a = 1, b = 1;
  for (int64_t k = 0; k < static_cast<int64_t>(x.shape.size()); ++k) (k < axis ? a : b) *= x.shape[k];
  out[0] = with_shape(x, {a, b});
}

std::vector<int64_t> axes_from(const Node& node, std::span<const Tensor* const> in, std::size_t input_index) {
  if (auto a = node.attr_ints("axes")) return *a;
  if (const Tensor* t = opt(in, input_index)) return int_values(*t);
  return {};
}

void op_unsqueeze(const Node& node, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  const Tensor& x = need(in, 0);
  auto axes = axes_from(node, in, 1);
  const std::size_t rank = x.shape.size() + axes.size();
  std::vector<bool> inserted(rank, false);
  for (auto a : axes) {
    auto k = normalize_axis(a, rank);
    if (inserted[k]) fail("Unsqueeze axis repeated");
    inserted[k] = true;
  }
  Shape s;
  std::size_t src = 0;
  for (std::size_t k = 0; k < rank; ++k) s.push_back(inserted[k] ? 1 : x.shape[src++]);
  out[0] = with_shape(x, std::move(s));
}

void op_squeeze(const Node& node, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  const Tensor& x = need(in, 0);
  auto axes = axes_from(node, in, 1);
  std::vector<bool> drop(x.shape.size(), false);
  if (axes.empty()) {
    for (std::size_t k = 0; k < x.shape.size(); ++k) drop[k] = x.shape[k] == 1;
  } else {
    for (auto a : axes) {
      auto k = normalize_axis(a, x.shape.size());
      if (x.shape[k] != 1) fail("Squeeze of a dimension that is not 1");
      drop[k] = true;
    }
  }
  Shape s;
  for (std::size_t k = 0; k < x.shape.size(); ++k) {
    if (!drop[k]) s.push_back(x.shape[k]);
  }
  out[0] = with_shape(x, std::move(s));
}

// Copies elements of x into a tensor of shape `s`, where element e of the
// result comes from x at linear index src[e].
Tensor gather_elements(const Tensor& x, Shape s, const std::vector<std::size_t>& src) {
  Tensor y;
  y.dtype = x.dtype;
  y.shape = std::move(s);
  if (x.dtype == DType::f32) {
    y.f.resize(src.size());
    for (std::size_t e = 0; e < src.size(); ++e) y.f[e] = x.f[src[e]];
  } else {
    y.i.resize(src.size());
    for (std::size_t e = 0; e < src.size(); ++e) y.i[e] = x.i[src[e]];
  }
  return y;
}

void op_transpose(const Node& node, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  const Tensor& x = need(in, 0);
  const std::size_t r = x.shape.size();
  std::vector<int64_t> perm(r);
  if (auto p = node.attr_ints("perm")) {
    perm = *p;
  } else {
    for (std::size_t k = 0; k < r; ++k) perm[k] = static_cast<int64_t>(r - 1 - k);
  }
  if (perm.size() != r) fail("Transpose perm has the wrong length");
  Shape s(r);
  for (std::size_t k = 0; k < r; ++k) s[k] = x.shape[normalize_axis(perm[k], r)];
  auto in_st = strides_of(x.shape);
  // Strides of x visited in output order.
  std::vector<int64_t> st(r);
  for (std::size_t k = 0; k < r; ++k) st[k] = in_st[normalize_axis(perm[k], r)];
  const std::size_t n = x.size();
  std::vector<std::size_t> src(n);
  std::vector<int64_t> counter(r, 0);
  std::size_t pos = 0;
  for (std::size_t e = 0; e < n; ++e) {
    src[e] = pos;
    for (int k = static_cast<int>(r) - 1; k >= 0; --k) {
      if (++counter[k] < s[k]) {
        pos += st[k];
        break;
      }
      pos -= st[k] * (s[k] - 1);
      counter[k] = 0;
    }
  }
  out[0] = gather_elements(x, std::move(s), src);
}

void op_concat(const Node& node, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  const Tensor& first = need(in, 0);
  const std::size_t r = first.shape.size();
  const auto axis = normalize_axis(node.attr_int("axis", 0), r);
  Shape s = first.shape;
  s[axis] = 0;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const Tensor& t = need(in, k);
    if (t.dtype != first.dtype || t.shape.size() != r) fail("Concat inputs disagree in type or rank");
    for (std::size_t d = 0; d < r; ++d) {
      if (static_cast<int64_t>(d) != axis && t.shape[d] != first.shape[d]) fail("Concat inputs disagree in shape");
    }
    s[axis] += t.shape[axis];
  }
  int64_t outer = 1, inner = 1;
  for (int64_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < r; ++d) inner *= s[d];
  Tensor y;
  y.dtype = first.dtype;
  y.shape = s;
  for (int64_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < in.size(); ++k) {
      const Tensor& t = *in[k];
      const int64_t chunk = t.shape[axis] * inner;
      if (t.dtype == DType::f32) {
        y.f.insert(y.f.end(), t.f.begin() + o * chunk, t.f.begin() + (o + 1) * chunk);
      } else {
        y.i.insert(y.i.end(), t.i.begin() + o * chunk, t.i.begin() + (o + 1) * chunk);
      }
    }
  }
  out[0] = std::move(y);
}

void op_shape(const Node& node, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  const Tensor& x = need(in, 0);
  const auto r = static_cast<int64_t>(x.shape.size());
  int64_t start = node.attr_int("start", 0), end = node.attr_int("end", r);
  if (start < 0) start += r;
  if (end < 0) end += r;
  start = std::clamp<int64_t>(start, 0, r);
  end = std::clamp<int64_t>(end, 0, r);
  std::vector<int64_t> dims(x.shape.begin() + start, x.shape.begin() + std::max(start, end));
  const auto n = static_cast<int64_t>(dims.size());
  out[0] = Tensor::ints({n}, std::move(dims));
}

void op_gather(const Node& node, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  const Tensor& x = need(in, 0);
  const Tensor& idx = need(in, 1);
  auto indices = int_values(idx);
  const auto axis = normalize_axis(node.attr_int("axis", 0), x.shape.size());
  const int64_t dim = x.shape[axis];
  int64_t outer = 1, inner = 1;
  for (int64_t d = 0; d < axis; ++d) outer *= x.shape[d];
  for (std::size_t d = axis + 1; d < x.shape.size(); ++d) inner *= x.shape[d];
  Shape s(x.shape.begin(), x.shape.begin() + axis);
  s.insert(s.end(), idx.shape.begin(), idx.shape.end());
  s.insert(s.end(), x.shape.begin() + axis + 1, x.shape.end());
  std::vector<std::size_t> src;
  src.reserve(element_count(s));
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t j : indices) {
      if (j < -dim || j >= dim) fail("Gather index " + std::to_string(j) + " out of range");
      if (j < 0) j += dim;
      for (int64_t q = 0; q < inner; ++q) src.push_back(static_cast<std::size_t>((o * dim + j) * inner + q));
    }
  }
  out[0] = gather_elements(x, std::move(s), src);
}

void op_slice(const Node& node, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  const Tensor& x = need(in, 0);
  const std::size_t r = x.shape.size();
  std::vector<int64_t> starts, ends, axes, steps;
  if (node.opset < 10) {
    starts = node.attr_ints("starts").value_or(std::vector<int64_t>{});
    ends = node.attr_ints("ends").value_or(std::vector<int64_t>{});
    axes = node.attr_ints("axes").value_or(std::vector<int64_t>{});
  } else {
    starts = int_values(need(in, 1));
    ends = int_values(need(in, 2));
    if (const Tensor* t = opt(in, 3)) axes = int_values(*t);
    if (const Tensor* t = opt(in, 4)) steps = int_values(*t);
  }
  if (axes.empty()) {
    for (std::size_t k = 0; k < starts.size(); ++k) axes.push_back(static_cast<int64_t>(k));
  }
  if (steps.empty()) steps.assign(starts.size(), 1);
  if (ends.size() != starts.size() || axes.size() != starts.size() || steps.size() != starts.size()) {
    fail("Slice parameter lengths differ");
  }
  std::vector<int64_t> first(r, 0), step(r, 1);
  Shape s = x.shape;
  for (std::size_t k = 0; k < starts.size(); ++k) {
    const auto a = normalize_axis(axes[k], r);
    const int64_t dim = x.shape[a], st = steps[k];
    if (st == 0) fail("Slice step of zero");
    int64_t b = starts[k], e = ends[k];
    if (b < 0) b += dim;
    if (e < 0) e += dim;
    if (st > 0) {
      b = std::clamp<int64_t>(b, 0, dim);
      e = std::clamp<int64_t>(e, 0, dim);
      s[a] = e > b ? (e - b + st - 1) / st : 0;
    } else {
      b = std::clamp<int64_t>(b, 0, dim - 1);
      e = std::clamp<int64_t>(e, -1, dim - 1);
      s[a] = b > e ? (b - e - st - 1) / (-st) : 0;
    }
    first[a] = b;
    step[a] = st;
  }
  auto in_st = strides_of(x.shape);
  const std::size_t n = element_count(s);
  std::vector<std::size_t> src(n);
  std::vector<int64_t> counter(r, 0);
  for (std::size_t e = 0; e < n; ++e) {
    int64_t pos = 0;
    for (std::size_t k = 0; k < r; ++k) pos += (first[k] + counter[k] * step[k]) * in_st[k];
    src[e] = static_cast<std::size_t>(pos);
    for (int k = static_cast<int>(r) - 1; k >= 0; --k) {
      if (++counter[k] < s[k]) break;
      counter[k] = 0;
    }
  }
  out[0] = gather_elements(x, std::move(s), src);
}

void op_expand(const Node&, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  const Tensor& x = need(in, 0);
  Shape s = broadcast_shape(x.shape, int_values(need(in, 1)));
  out[0] = gather_elements(x, s, broadcast_offsets(x.shape, s));
}

void op_constant(const Node& node, std::span<const Tensor* const>, std::vector<Tensor>& out) {
  if (const Attribute* a = node.attr("value")) {
    out[0] = *a->t;
  } else if (const Attribute* a = node.attr("value_float")) {
    out[0] = Tensor::floats({}, {a->f});
  } else if (const Attribute* a = node.attr("value_floats")) {
    out[0] = Tensor::floats({static_cast<int64_t>(a->floats.size())}, a->floats);
  } else if (const Attribute* a = node.attr("value_int")) {
    out[0] = Tensor::ints({}, {a->i});
  } else if (const Attribute* a = node.attr("value_ints")) {
    out[0] = Tensor::ints({static_cast<int64_t>(a->ints.size())}, a->ints);
  } else {
    fail("Constant without a supported value attribute");
  }
}

void op_constant_of_shape(const Node& node, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  Shape s = int_values(need(in, 0));
  const std::size_t n = element_count(s);
  const Attribute* a = node.attr("value");
  if (!a || a->t->dtype == DType::f32) {
    float v = a ? a->t->f.at(0) : 0.0f;
    out[0] = Tensor::floats(std::move(s), std::vector<float>(n, v));
  } else {
    out[0] = Tensor::ints(std::move(s), std::vector<int64_t>(n, a->t->i.at(0)));
    out[0].dtype = a->t->dtype;
  }
}

void op_range(const Node&, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  const Tensor& start = need(in, 0);
  const Tensor& limit = need(in, 1);
  const Tensor& delta = need(in, 2);
  if (start.dtype == DType::f32) {
    const double s = start.f.at(0), l = limit.f.at(0), d = delta.f.at(0);
    if (d == 0) fail("Range delta of zero");
    const auto n = static_cast<int64_t>(std::max(std::ceil((l - s) / d), 0.0));
    std::vector<float> y(n);
    for (int64_t k = 0; k < n; ++k) y[k] = static_cast<float>(s + k * d);
    out[0] = Tensor::floats({n}, std::move(y));
  } else {
    const int64_t s = start.i.at(0), l = limit.i.at(0), d = delta.i.at(0);
    if (d == 0) fail("Range delta of zero");
    int64_t n = (l - s) / d + ((l - s) % d != 0 && ((l - s) > 0) == (d > 0) ? 1 : 0);
    n = std::max<int64_t>(n, 0);
    std::vector<int64_t> y(n);
    for (int64_t k = 0; k < n; ++k) y[k] = s + k * d;
    out[0] = Tensor::ints({n}, std::move(y));
  }
}

void op_cast(const Node& node, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  const Tensor& x = need(in, 0);
  const int64_t to = node.attr_int("to", 0);
  // TensorProto element type codes.
  constexpr int64_t kFloat = 1, kInt32 = 6, kInt64 = 7, kBool = 9, kDouble = 11;
  if (to == kFloat || to == kDouble) {
    if (x.dtype == DType::f32) {
      out[0] = x;
    } else {
      out[0] = Tensor::floats(x.shape, std::vector<float>(x.i.begin(), x.i.end()));
    }
  } else if (to == kInt64 || to == kInt32) {
    if (x.dtype == DType::f32) {
      std::vector<int64_t> y(x.f.size());
      for (std::size_t e = 0; e < y.size(); ++e) {
        if (!std::isfinite(x.f[e])) fail("Cast of non-finite value to integer");
        y[e] = static_cast<int64_t>(x.f[e]);  // truncates toward zero
      }
      out[0] = Tensor::ints(x.shape, std::move(y));
    } else {
      out[0] = Tensor::ints(x.shape, x.i);
    }
  } else if (to == kBool) {
    std::vector<int64_t> y(x.size());
    for (std::size_t e = 0; e < y.size(); ++e) y[e] = x.dtype == DType::f32 ? x.f[e] != 0.0f : x.i[e] != 0;
    out[0] = Tensor::bools(x.shape, std::move(y));
  } else {
    fail("Cast to unsupported element type " + std::to_string(to));
  }
}

// ---------------------------------------------------------------------------
// Linear algebra

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMat>;
using RowMap = Eigen::Map<RowMat>;

void op_matmul(const Node&, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  const Tensor& a0 = need(in, 0);
  const Tensor& b0 = need(in, 1);
  need_float(a0, "MatMul A");
  need_float(b0, "MatMul B");
  Shape as = a0.shape, bs = b0.shape;
  const bool a_vec = as.size() == 1, b_vec = bs.size() == 1;
  if (a_vec) as.insert(as.begin(), 1);
  if (b_vec) bs.push_back(1);
  if (as.size() < 2 || bs.size() < 2) fail("MatMul of a scalar");
  const int64_t m = as[as.size() - 2], k = as.back(), k2 = bs[bs.size() - 2], n = bs.back();
  if (k != k2) fail("MatMul inner dimensions differ: " + shape_text(a0.shape) + " x " + shape_text(b0.shape));
  Shape a_batch(as.begin(), as.end() - 2), b_batch(bs.begin(), bs.end() - 2);
  Shape batch = broadcast_shape(a_batch, b_batch);
  auto ia = broadcast_offsets(a_batch, batch), ib = broadcast_offsets(b_batch, batch);
  const std::size_t nb = element_count(batch);
  std::vector<float> y(nb * m * n);
  for (std::size_t q = 0; q < nb; ++q) {
    ConstRowMap A(a0.f.data() + ia[q] * m * k, m, k);
    ConstRowMap B(b0.f.data() + ib[q] * k * n, k, n);
    RowMap Y(y.data() + q * m * n, m, n);
    Y.noalias() = A * B;
  }
  Shape s = batch;
  if (!a_vec) s.push_back(m);
  if (!b_vec) s.push_back(n);
  out[0] = Tensor::floats(std::move(s), std::move(y));
}

void op_gemm(const Node& node, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  const Tensor& a = need(in, 0);
  const Tensor& b = need(in, 1);
  need_float(a, "Gemm A");
  need_float(b, "Gemm B");
  if (a.shape.size() != 2 || b.shape.size() != 2) fail("Gemm expects 2-D operands");
  const float alpha = node.attr_float("alpha", 1.0f), beta = node.attr_float("beta", 1.0f);
  const bool ta = node.attr_int("transA", 0) != 0, tb = node.attr_int("transB", 0) != 0;
  ConstRowMap A(a.f.data(), a.shape[0], a.shape[1]);
  ConstRowMap B(b.f.data(), b.shape[0], b.shape[1]);
  RowMat Y = ta ? (tb ? RowMat(A.transpose() * B.transpose()) : RowMat(A.transpose() * B))
                : (tb ? RowMat(A * B.transpose()) : RowMat(A * B));
  if (Y.cols() != (tb ? b.shape[0] : b.shape[1]) || (ta ? a.shape[0] : a.shape[1]) != (tb ? b.shape[1] : b.shape[0])) {
    fail("Gemm dimensions do not agree");
  }
  Y *= alpha;
  Shape s = {Y.rows(), Y.cols()};
  std::vector<float> y(Y.data(), Y.data() + Y.size());
  if (const Tensor* c = opt(in, 2)) {
    need_float(*c, "Gemm C");
    auto ic = broadcast_offsets(c->shape, s);
    for (std::size_t e = 0; e < y.size(); ++e) y[e] += beta * c->f[ic[e]];
  }
  out[0] = Tensor::floats(std::move(s), std::move(y));
}

void op_conv(const Node& node, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  const Tensor& x = need(in, 0);
  const Tensor& w = need(in, 1);
  const Tensor* bias = opt(in, 2);
  need_float(x, "Conv input");
  need_float(w, "Conv weight");
  if (x.shape.size() != 3 || w.shape.size() != 3) fail("only 1-D Conv (rank-3 input and weight) is supported");
  const std::string auto_pad = node.attr_string("auto_pad", "NOTSET");
  if (auto_pad != "NOTSET" && auto_pad != "VALID") fail("Conv auto_pad=" + auto_pad + " is not supported");
  const int64_t batch = x.shape[0], cin = x.shape[1], len = x.shape[2];
  const int64_t cout = w.shape[0], cg = w.shape[1], kernel = w.shape[2];
  const int64_t group = node.attr_int("group", 1);
  if (group <= 0 || cin != cg * group || cout % group != 0) fail("Conv channel/group mismatch");
  auto pads = node.attr_ints("pads").value_or(std::vector<int64_t>{0, 0});
  auto strides = node.attr_ints("strides").value_or(std::vector<int64_t>{1});
  auto dil = node.attr_ints("dilations").value_or(std::vector<int64_t>{1});
  if (auto ks = node.attr_ints("kernel_shape"); ks && (ks->size() != 1 || (*ks)[0] != kernel)) {
    fail("Conv kernel_shape disagrees with weight");
  }
  if (pads.size() != 2 || strides.size() != 1 || dil.size() != 1) fail("Conv attribute lengths do not match 1-D");
  if (auto_pad == "VALID") pads = {0, 0};
  const int64_t stride = strides[0], dilation = dil[0], pb = pads[0], pe = pads[1];
  const int64_t span = dilation * (kernel - 1) + 1;
  const int64_t lout = (len + pb + pe - span) / stride + 1;
  if (lout <= 0) fail("Conv input of length " + std::to_string(len) + " is shorter than the kernel");
  const int64_t og = cout / group;
  std::vector<float> y(static_cast<std::size_t>(batch * cout * lout));
  RowMat col(cg * kernel, lout);
  for (int64_t n = 0; n < batch; ++n) {
    for (int64_t g = 0; g < group; ++g) {
      for (int64_t c = 0; c < cg; ++c) {
        const float* xin = x.f.data() + (n * cin + g * cg + c) * len;
        for (int64_t kk = 0; kk < kernel; ++kk) {
          float* row = col.data() + (c * kernel + kk) * lout;
          for (int64_t t = 0; t < lout; ++t) {
            int64_t src = t * stride - pb + kk * dilation;
            row[t] = (src >= 0 && src < len) ? xin[src] : 0.0f;
          }
        }
      }
      ConstRowMap W(w.f.data() + g * og * cg * kernel, og, cg * kernel);
      RowMap Y(y.data() + (n * cout + g * og) * lout, og, lout);
      Y.noalias() = W * col;
    }
    if (bias) {
      for (int64_t o = 0; o < cout; ++o) {
        float* row = y.data() + (n * cout + o) * lout;
        for (int64_t t = 0; t < lout; ++t) row[t] += bias->f[o];
      }
    }
  }
  out[0] = Tensor::floats({batch, cout, lout}, std::move(y));
}

// ---------------------------------------------------------------------------
// Normalization, softmax, reductions

void op_instance_norm(const Node& node, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  const Tensor& x = need(in, 0);
  const Tensor& scale = need(in, 1);
  const Tensor& bias = need(in, 2);
  need_float(x, "InstanceNormalization input");
  if (x.shape.size() < 3) fail("InstanceNormalization expects rank >= 3");
  const double eps = node.attr_float("epsilon", 1e-5f);
  const int64_t batch = x.shape[0], ch = x.shape[1];
  const std::size_t inner = x.size() / static_cast<std::size_t>(batch * ch);
  std::vector<float> y(x.f.size());
  for (int64_t n = 0; n < batch; ++n) {
    for (int64_t c = 0; c < ch; ++c) {
      const std::size_t base = static_cast<std::size_t>(n * ch + c) * inner;
      double mean = 0, var = 0;
      for (std::size_t q = 0; q < inner; ++q) mean += x.f[base + q];
      mean /= static_cast<double>(inner);
      for (std::size_t q = 0; q < inner; ++q) var += (x.f[base + q] - mean) * (x.f[base + q] - mean);
      var /= static_cast<double>(inner);
      const double inv = 1.0 / std::sqrt(var + eps);
      for (std::size_t q = 0; q < inner; ++q) {
        y[base + q] = static_cast<float>((x.f[base + q] - mean) * inv * scale.f[c] + bias.f[c]);
      }
    }
  }
  out[0] = Tensor::floats(x.shape, std::move(y));
}

void op_layer_norm(const Node& node, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  const Tensor& x = need(in, 0);
  const Tensor& scale = need(in, 1);
  const Tensor* bias = opt(in, 2);
  need_float(x, "LayerNormalization input");
  const auto axis = normalize_axis(node.attr_int("axis", -1), x.shape.size());
  const double eps = node.attr_float("epsilon", 1e-5f);
  Shape norm_shape(x.shape.begin() + axis, x.shape.end());
  const std::size_t inner = element_count(norm_shape);
  const std::size_t outer = inner ? x.size() / inner : 0;
  auto is = broadcast_offsets(scale.shape, norm_shape);
  std::vector<std::size_t> ib;
  if (bias) ib = broadcast_offsets(bias->shape, norm_shape);
  std::vector<float> y(x.f.size());
  Shape stat_shape = x.shape;
  for (std::size_t d = axis; d < stat_shape.size(); ++d) stat_shape[d] = 1;
  std::vector<float> means(outer), invs(outer);
  for (std::size_t o = 0; o < outer; ++o) {
    const float* row = x.f.data() + o * inner;
    double mean = 0, var = 0;
    for (std::size_t q = 0; q < inner; ++q) mean += row[q];
    mean /= static_cast<double>(inner);
    for (std::size_t q = 0; q < inner; ++q) var += (row[q] - mean) * (row[q] - mean);
    var /= static_cast<double>(inner);
    const double inv = 1.0 / std::sqrt(var + eps);
    means[o] = static_cast<float>(mean);
    invs[o] = static_cast<float>(inv);
    for (std::size_t q = 0; q < inner; ++q) {
      double v = (row[q] - mean) * inv * scale.f[is[q]];
      if (bias) v += bias->f[ib[q]];
      y[o * inner + q] = static_cast<float>(v);
    }
  }
  out[0] = Tensor::floats(x.shape, std::move(y));
  if (out.size() > 1) out[1] = Tensor::floats(stat_shape, std::move(means));
  if (out.size() > 2) out[2] = Tensor::floats(stat_shape, std::move(invs));
}

void op_softmax(const Node& node, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  const Tensor& x = need(in, 0);
  need_float(x, "Softmax input");
  const std::size_t r = x.shape.size();
  const auto axis = normalize_axis(node.attr_int("axis", node.opset >= 13 ? -1 : 1), r);
  // Before opset 13 the input is coerced to 2-D at `axis`; from 13 on the
  // softmax runs along that single axis.
  int64_t outer = 1, dim = 1, inner = 1;
  for (int64_t d = 0; d < axis; ++d) outer *= x.shape[d];
  if (node.opset >= 13) {
    dim = x.shape[axis];
    for (std::size_t d = axis + 1; d < r; ++d) inner *= x.shape[d];
  } else {
    for (std::size_t d = axis; d < r; ++d) dim *= x.shape[d];
  }
  std::vector<float> y(x.f.size());
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t q = 0; q < inner; ++q) {
      auto at = [&](int64_t j) { return static_cast<std::size_t>((o * dim + j) * inner + q); };
      double mx = -std::numeric_limits<double>::infinity();
      for (int64_t j = 0; j < dim; ++j) mx = std::max(mx, static_cast<double>(x.f[at(j)]));
      double sum = 0;
      for (int64_t j = 0; j < dim; ++j) sum += std::exp(x.f[at(j)] - mx);
      for (int64_t j = 0; j < dim; ++j) y[at(j)] = static_cast<float>(std::exp(x.f[at(j)] - mx) / sum);
    }
  }
  out[0] = Tensor::floats(x.shape, std::move(y));
}

template <bool mean>
void op_reduce(const Node& node, std::span<const Tensor* const> in, std::vector<Tensor>& out) {
  const Tensor& x = need(in, 0);
  need_float(x, "reduction input");
  const std::size_t r = x.shape.size();
  auto axes = axes_from(node, in, 1);
  const bool keep = node.attr_int("keepdims", 1) != 0;
  if (axes.empty() && node.attr_int("noop_with_empty_axes", 0) != 0) {
    out[0] = x;
    return;
  }
  std::vector<bool> reduce(r, axes.empty());
  for (auto a : axes) reduce[normalize_axis(a, r)] = true;
  Shape kept_shape(r);
  for (std::size_t d = 0; d < r; ++d) kept_shape[d] = reduce[d] ? 1 : x.shape[d];
  auto dst = broadcast_offsets(kept_shape, x.shape);
  std::vector<double> acc(element_count(kept_shape), 0.0);
  for (std::size_t e = 0; e < x.f.size(); ++e) acc[dst[e]] += x.f[e];
  const double count = acc.empty() ? 1.0 : static_cast<double>(x.size()) / static_cast<double>(acc.size());
  std::vector<float> y(acc.size());
  for (std::size_t e = 0; e < y.size(); ++e) y[e] = static_cast<float>(mean ? acc[e] / count : acc[e]);
  Shape s;
  for (std::size_t d = 0; d < r; ++d) {
    if (!reduce[d]) {
      s.push_back(x.shape[d]);
    } else if (keep) {
      s.push_back(1);
    }
  }
  out[0] = Tensor::floats(std::move(s), std::move(y));
}

const std::unordered_map<std::string, Kernel>& registry() {
  static const std::unordered_map<std::string, Kernel> table = {
      {"Add", arith<Arith::add>},
      {"Sub", arith<Arith::sub>},
      {"Mul", arith<Arith::mul>},
      {"Div", arith<Arith::div>},
      {"Pow", op_pow},
      {"Mod", op_mod},
      {"Min", op_minmax<false>},
      {"Max", op_minmax<true>},
      {"Sqrt", op_sqrt},
      {"Exp", op_exp},
      {"Log", op_log},
      {"Tanh", op_tanh},
      {"Erf", op_erf},
      {"Sigmoid", op_sigmoid},
      {"Relu", op_relu},
      {"Reciprocal", op_reciprocal},
      {"Floor", op_floor},
      {"Ceil", op_ceil},
      {"Neg", op_neg},
      {"Abs", op_abs},
      {"Gelu", op_gelu},
      {"Clip", op_clip},
      {"Equal", op_equal},
      {"Greater", op_greater},
      {"Less", op_less},
      {"GreaterOrEqual", op_greater_equal},
      {"LessOrEqual", op_less_equal},
      {"Not", op_not},
      {"And", op_and},
      {"Or", op_or},
      {"IsNaN", op_isnan},
      {"Where", op_where},
      {"Identity", op_identity},
      {"Dropout", op_identity},
      {"Reshape", op_reshape},
      {"Flatten", op_flatten},
      {"Unsqueeze", op_unsqueeze},
      {"Squeeze", op_squeeze},
      {"Transpose", op_transpose},
      {"Concat", op_concat},
      {"Shape", op_shape},
      {"Gather", op_gather},
      {"Slice", op_slice},
      {"Expand", op_expand},
      {"Constant", op_constant},
      {"ConstantOfShape", op_constant_of_shape},
      {"Range", op_range},
      {"Cast", op_cast},
      {"MatMul", op_matmul},
      {"Gemm", op_gemm},
      {"Conv", op_conv},
      {"InstanceNormalization", op_instance_norm},
      {"LayerNormalization", op_layer_norm},
      {"Softmax", op_softmax},
      {"ReduceMean", op_reduce<true>},
      {"ReduceSum", op_reduce<false>},
  };
  return table;
}

}  // namespace

Kernel find_kernel(const std::string& op_type) {
  auto it = registry().find(op_type);
  return it == registry().end() ? nullptr : it->second;
}

}  // namespace stopburst::onnx
