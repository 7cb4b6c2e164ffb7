// Copyright 2026 The Warmdistill Authors.
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

#include "warmdistill/tensor.h"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>

#include "kernels.h"

namespace wd {

std::size_t NumElements(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) n *= extent;
  return n;
}

std::string ShapeString(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace detail {

std::uint64_t NextNodeId() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace detail

// ---------------------------------------------------------------- Tensor

template <typename T>
Tensor<T> Tensor<T>::Zeros(Shape shape, bool requires_grad) {
  const std::size_t n = NumElements(shape);
  return FromData(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::FromData(Shape shape, std::vector<T> data,
                              bool requires_grad) {
  for (std::size_t extent : shape) {
    Require(extent > 0, ErrorCode::kShapeMismatch,
            "tensor extents must be positive, got " + ShapeString(shape));
  }
  Require(NumElements(shape) == data.size(), ErrorCode::kShapeMismatch,
          "data length " + std::to_string(data.size()) +
              " does not match shape " + ShapeString(shape));
  auto node = std::make_shared<detail::Node<T>>();
  node->id = detail::NextNodeId();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::Scalar(T value, bool requires_grad) {
  return FromData({1}, {value}, requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
  Require(numel() == 1, ErrorCode::kShapeMismatch,
          "item() on non-scalar tensor " + ShapeString(shape()));
  return node_->value[0];
}

template <typename T>
Tensor<T> Tensor<T>::Detach() const {
  return FromData(shape(), node_->value, false);
}

template <typename T>
Tensor<T> Tensor<T>::Clone(bool requires_grad) const {
  return FromData(shape(), node_->value, requires_grad);
}

// ------------------------------------------------------------------ Tape

template <typename T>
Tensor<T> Tape<T>::MakeOutput(Shape shape,
                              std::initializer_list<const Tensor<T>*> inputs) const {
  bool needs = false;
  if (recording()) {
    for (const Tensor<T>* in : inputs) needs = needs || in->requires_grad();
  }
  return Tensor<T>::Zeros(std::move(shape), needs);
}

template <typename T>
Tensor<T> Tape<T>::MakeOutput(Shape shape, std::span<const Tensor<T>> inputs) const {
  bool needs = false;
  if (recording()) {
    for (const Tensor<T>& in : inputs) needs = needs || in.requires_grad();
  }
  return Tensor<T>::Zeros(std::move(shape), needs);
}

template <typename T>
void Tape<T>::Record(std::string_view op,
                     std::initializer_list<const Tensor<T>*> inputs,
                     const Tensor<T>& output, BackwardRule rule) {
  Require(!consumed_, ErrorCode::kState, "recording onto a consumed tape");
  if (!recording() || !output.requires_grad()) return;
  Entry entry;
  entry.op = op;
  for (const Tensor<T>* in : inputs) entry.input_ids.push_back(in->id());
  entry.output_id = output.id();
  entry.output = output.node();
  entry.rule = std::move(rule);
  entries_.push_back(std::move(entry));
}

template <typename T>
void Tape<T>::Record(std::string_view op, std::span<const Tensor<T>> inputs,
                     const Tensor<T>& output, BackwardRule rule) {
  Require(!consumed_, ErrorCode::kState, "recording onto a consumed tape");
  if (!recording() || !output.requires_grad()) return;
  Entry entry;
  entry.op = op;
  for (const Tensor<T>& in : inputs) entry.input_ids.push_back(in.id());
  entry.output_id = output.id();
  entry.output = output.node();
  entry.rule = std::move(rule);
  entries_.push_back(std::move(entry));
}

template <typename T>
void Tape<T>::Backward(const Tensor<T>& root) {
  Require(!consumed_, ErrorCode::kState, "tape already consumed by backward");
  Require(root.defined() && root.numel() == 1, ErrorCode::kShapeMismatch,
          "backward root must be a scalar");
  consumed_ = true;
  if (!root.requires_grad()) return;
  root.node()->EnsureGrad()[0] += T(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->rule();
  }
}

template <typename T>
void CheckFinite(std::string_view op, std::span<const T> values) {
  for (T v : values) {
    if (!std::isfinite(v)) {
      Fail(ErrorCode::kNonFinite,
           "non-finite value produced by " + std::string(op));
    }
  }
}

// ------------------------------------------------------------------- ops

namespace ops {
namespace {

template <typename T>
T* GradOf(const Tensor<T>& t) {
  return t.requires_grad() ? t.node()->EnsureGrad() : nullptr;
}

template <typename T>
const T* OutGrad(const Tensor<T>& out) {
  return out.node()->grad.data();
}

template <typename T>
std::size_t Rows(const Tensor<T>& t) {
  return t.numel() / t.last_dim();
}

template <typename T>
void RequireSameShape(std::string_view op, const Tensor<T>& a, const Tensor<T>& b) {
  Require(a.shape() == b.shape(), ErrorCode::kShapeMismatch,
          std::string(op) + ": shape mismatch " + ShapeString(a.shape()) +
              " vs " + ShapeString(b.shape()));
}

}  // namespace

template <typename T>
Tensor<T> MatMul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  Require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
          ErrorCode::kShapeMismatch,
          "matmul: cannot multiply " + ShapeString(a.shape()) + " by " +
              ShapeString(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> out = tape.MakeOutput({m, n}, {&a, &b});
  kernels::Gemm(a.data().data(), b.data().data(), out.mutable_data().data(), m, k, n);
  CheckFinite<T>("matmul", out.data());
  tape.Record("matmul", {&a, &b}, out, [a, b, out, m, k, n]() {
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const Mat> g(OutGrad(out), m, n);
    if (T* ga = GradOf(a)) {
      Eigen::Map<const Mat> bm(b.data().data(), k, n);
      Eigen::Map<Mat>(ga, m, k).noalias() += g * bm.transpose();
    }
    if (T* gb = GradOf(b)) {
      Eigen::Map<const Mat> am(a.data().data(), m, k);
      Eigen::Map<Mat>(gb, k, n).noalias() += am.transpose() * g;
    }
  });
  return out;
}

template <typename T>
Tensor<T> Add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  const bool bias = b.rank() == 1 && a.shape() != b.shape();
  if (bias) {
    Require(b.dim(0) == a.last_dim(), ErrorCode::kShapeMismatch,
            "add: bias extent " + std::to_string(b.dim(0)) +
                " does not match last axis of " + ShapeString(a.shape()));
  } else {
    RequireSameShape("add", a, b);
  }
  Tensor<T> out = tape.MakeOutput(a.shape(), {&a, &b});
  const std::size_t n = a.numel(), cols = a.last_dim();
  const T* av = a.data().data();
  const T* bv = b.data().data();
  T* ov = out.mutable_data().data();
  for (std::size_t i = 0; i < n; ++i) ov[i] = av[i] + bv[bias ? i % cols : i];
  CheckFinite<T>("add", out.data());
  tape.Record("add", {&a, &b}, out, [a, b, out, bias, n, cols]() {
    const T* g = OutGrad(out);
    if (T* ga = GradOf(a)) {
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
    }
    if (T* gb = GradOf(b)) {
      for (std::size_t i = 0; i < n; ++i) gb[bias ? i % cols : i] += g[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> Sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  RequireSameShape("sub", a, b);
  Tensor<T> out = tape.MakeOutput(a.shape(), {&a, &b});
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) {
    out.mutable_data()[i] = a.data()[i] - b.data()[i];
  }
  CheckFinite<T>("sub", out.data());
  tape.Record("sub", {&a, &b}, out, [a, b, out, n]() {
    const T* g = OutGrad(out);
    if (T* ga = GradOf(a)) {
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
    }
    if (T* gb = GradOf(b)) {
      for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> Mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  RequireSameShape("mul", a, b);
  Tensor<T> out = tape.MakeOutput(a.shape(), {&a, &b});
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) {
    out.mutable_data()[i] = a.data()[i] * b.data()[i];
  }
  CheckFinite<T>("mul", out.data());
  tape.Record("mul", {&a, &b}, out, [a, b, out, n]() {
    const T* g = OutGrad(out);
    if (T* ga = GradOf(a)) {
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * b.data()[i];
    }
    if (T* gb = GradOf(b)) {
      for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * a.data()[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> Scale(Tape<T>& tape, const Tensor<T>& a, T factor) {
  Tensor<T> out = tape.MakeOutput(a.shape(), {&a});
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) out.mutable_data()[i] = a.data()[i] * factor;
  CheckFinite<T>("scale", out.data());
  tape.Record("scale", {&a}, out, [a, out, n, factor]() {
    const T* g = OutGrad(out);
    if (T* ga = GradOf(a)) {
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * factor;
    }
  });
  return out;
}

template <typename T>
Tensor<T> Exp(Tape<T>& tape, const Tensor<T>& a) {
  Tensor<T> out = tape.MakeOutput(a.shape(), {&a});
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) out.mutable_data()[i] = std::exp(a.data()[i]);
  CheckFinite<T>("exp", out.data());
  tape.Record("exp", {&a}, out, [a, out, n]() {
    const T* g = OutGrad(out);
    if (T* ga = GradOf(a)) {
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * out.data()[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> EmbedGather(Tape<T>& tape, const Tensor<T>& table,
                      std::span<const int> ids) {
  Require(table.rank() == 2, ErrorCode::kShapeMismatch,
          "embed_gather: table must be 2-D, got " + ShapeString(table.shape()));
  Require(!ids.empty(), ErrorCode::kShapeMismatch, "embed_gather: no indices");
  const std::size_t rows = table.dim(0), d = table.dim(1);
  std::vector<int> index(ids.begin(), ids.end());
  for (int id : index) {
    Require(id >= 0 && static_cast<std::size_t>(id) < rows,
            ErrorCode::kInvalidArgument,
            "embed_gather: index " + std::to_string(id) + " out of range " +
                std::to_string(rows));
  }
  Tensor<T> out = tape.MakeOutput({index.size(), d}, {&table});
  const T* tv = table.data().data();
  T* ov = out.mutable_data().data();
  for (std::size_t i = 0; i < index.size(); ++i) {
    std::copy_n(tv + static_cast<std::size_t>(index[i]) * d, d, ov + i * d);
  }
  tape.Record("embed_gather", {&table}, out, [table, out, index = std::move(index), d]() {
    const T* g = OutGrad(out);
    if (T* gt = GradOf(table)) {
      for (std::size_t i = 0; i < index.size(); ++i) {
        T* row = gt + static_cast<std::size_t>(index[i]) * d;
        for (std::size_t j = 0; j < d; ++j) row[j] += g[i * d + j];
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> LayerNorm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gain,
                    const Tensor<T>& bias, T eps) {
  const std::size_t d = x.last_dim();
  Require(gain.numel() == d && bias.numel() == d, ErrorCode::kShapeMismatch,
          "layernorm: gain/bias must match last axis of " + ShapeString(x.shape()));
  const std::size_t rows = Rows(x);
  Tensor<T> out = tape.MakeOutput(x.shape(), {&x, &gain, &bias});
  std::vector<T> xhat(x.numel());
  std::vector<T> rstd(rows);
  kernels::LayerNormRows(x.data().data(), gain.data().data(), bias.data().data(),
                         out.mutable_data().data(), xhat.data(), rstd.data(),
                         rows, d, eps);
  CheckFinite<T>("layernorm", out.data());
  tape.Record("layernorm", {&x, &gain, &bias}, out,
              [x, gain, bias, out, xhat = std::move(xhat), rstd = std::move(rstd),
               rows, d]() {
    const T* g = OutGrad(out);
    const T* gv = gain.data().data();
    if (T* gg = GradOf(gain)) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * xhat[r * d + j];
    }
    if (T* gb = GradOf(bias)) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
    }
    if (T* gx = GradOf(x)) {
      for (std::size_t r = 0; r < rows; ++r) {
        const T* gr = g + r * d;
        const T* xr = xhat.data() + r * d;
        T mean_g = 0, mean_gx = 0;
        for (std::size_t j = 0; j < d; ++j) {
          const T gh = gr[j] * gv[j];
          mean_g += gh;
          mean_gx += gh * xr[j];
        }
        mean_g /= T(d);
        mean_gx /= T(d);
        for (std::size_t j = 0; j < d; ++j) {
          const T gh = gr[j] * gv[j];
          gx[r * d + j] += rstd[r] * (gh - mean_g - xr[j] * mean_gx);
        }
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> Softmax(Tape<T>& tape, const Tensor<T>& x) {
  const std::size_t d = x.last_dim(), rows = Rows(x);
  Tensor<T> out = tape.MakeOutput(x.shape(), {&x});
  for (std::size_t r = 0; r < rows; ++r) {
    kernels::SoftmaxRow(x.data().data() + r * d, out.mutable_data().data() + r * d, d);
  }
  CheckFinite<T>("softmax", out.data());
  tape.Record("softmax", {&x}, out, [x, out, rows, d]() {
    const T* g = OutGrad(out);
    T* gx = GradOf(x);
    if (!gx) return;
    const T* y = out.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
      T dot = 0;
      for (std::size_t j = 0; j < d; ++j) dot += g[r * d + j] * y[r * d + j];
      for (std::size_t j = 0; j < d; ++j) {
        gx[r * d + j] += y[r * d + j] * (g[r * d + j] - dot);
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> LogSoftmax(Tape<T>& tape, const Tensor<T>& x) {
  const std::size_t d = x.last_dim(), rows = Rows(x);
  Tensor<T> out = tape.MakeOutput(x.shape(), {&x});
  for (std::size_t r = 0; r < rows; ++r) {
    kernels::LogSoftmaxRow(x.data().data() + r * d, out.mutable_data().data() + r * d, d);
  }
  CheckFinite<T>("log_softmax", out.data());
  tape.Record("log_softmax", {&x}, out, [x, out, rows, d]() {
    const T* g = OutGrad(out);
    T* gx = GradOf(x);
    if (!gx) return;
    const T* y = out.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
      T total = 0;
      for (std::size_t j = 0; j < d; ++j) total += g[r * d + j];
      for (std::size_t j = 0; j < d; ++j) {
        gx[r * d + j] += g[r * d + j] - std::exp(y[r * d + j]) * total;
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> Gelu(Tape<T>& tape, const Tensor<T>& x) {
  Tensor<T> out = tape.MakeOutput(x.shape(), {&x});
  const std::size_t n = x.numel();
  kernels::GeluForward(x.data().data(), out.mutable_data().data(), n);
  CheckFinite<T>("gelu", out.data());
  tape.Record("gelu", {&x}, out, [x, out, n]() {
    const T* g = OutGrad(out);
    if (T* gx = GradOf(x)) kernels::GeluBackward(x.data().data(), g, gx, n);
  });
  return out;
}

template <typename T>
Tensor<T> Reshape(Tape<T>& tape, const Tensor<T>& x, Shape shape) {
  Require(NumElements(shape) == x.numel(), ErrorCode::kShapeMismatch,
          "reshape: cannot view " + ShapeString(x.shape()) + " as " +
              ShapeString(shape));
  Tensor<T> out = tape.MakeOutput(std::move(shape), {&x});
  std::copy(x.data().begin(), x.data().end(), out.mutable_data().begin());
  tape.Record("reshape", {&x}, out, [x, out]() {
    const T* g = OutGrad(out);
    if (T* gx = GradOf(x)) {
      for (std::size_t i = 0; i < x.numel(); ++i) gx[i] += g[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> Slice(Tape<T>& tape, const Tensor<T>& x, std::size_t axis,
                std::size_t begin, std::size_t end) {
  Require(axis < x.rank(), ErrorCode::kShapeMismatch,
          "slice: axis out of range for " + ShapeString(x.shape()));
  Require(begin < end && end <= x.dim(axis), ErrorCode::kShapeMismatch,
          "slice: bad range [" + std::to_string(begin) + "," + std::to_string(end) +
              ") on axis of extent " + std::to_string(x.dim(axis)));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t extent = x.dim(axis), width = end - begin;
  Shape shape = x.shape();
  shape[axis] = width;
  Tensor<T> out = tape.MakeOutput(std::move(shape), {&x});
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(x.data().data() + (o * extent + begin) * inner, width * inner,
                out.mutable_data().data() + o * width * inner);
  }
  tape.Record("slice", {&x}, out, [x, out, outer, inner, extent, begin, width]() {
    const T* g = OutGrad(out);
    if (T* gx = GradOf(x)) {
      for (std::size_t o = 0; o < outer; ++o) {
        T* dst = gx + (o * extent + begin) * inner;
        const T* src = g + o * width * inner;
        for (std::size_t i = 0; i < width * inner; ++i) dst[i] += src[i];
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> ReduceSum(Tape<T>& tape, const Tensor<T>& x) {
  Tensor<T> out = tape.MakeOutput({1}, {&x});
  T total = 0;
  for (T v : x.data()) total += v;
  out.mutable_data()[0] = total;
  CheckFinite<T>("reduce_sum", out.data());
  tape.Record("reduce_sum", {&x}, out, [x, out]() {
    const T g = OutGrad(out)[0];
    if (T* gx = GradOf(x)) {
      for (std::size_t i = 0; i < x.numel(); ++i) gx[i] += g;
    }
  });
  return out;
}

template <typename T>
Tensor<T> ReduceMean(Tape<T>& tape, const Tensor<T>& x) {
  Tensor<T> out = tape.MakeOutput({1}, {&x});
  T total = 0;
  for (T v : x.data()) total += v;
  const T n = static_cast<T>(x.numel());
  out.mutable_data()[0] = total / n;
  CheckFinite<T>("reduce_mean", out.data());
  tape.Record("reduce_mean", {&x}, out, [x, out, n]() {
    const T g = OutGrad(out)[0] / n;
    if (T* gx = GradOf(x)) {
      for (std::size_t i = 0; i < x.numel(); ++i) gx[i] += g;
    }
  });
  return out;
}

template <typename T>
Tensor<T> Pick(Tape<T>& tape, const Tensor<T>& x, std::span<const int> index) {
  Require(x.rank() == 2 && index.size() == x.dim(0), ErrorCode::kShapeMismatch,
          "pick: need one index per row of " + ShapeString(x.shape()));
  const std::size_t rows = x.dim(0), v = x.dim(1);
  std::vector<int> idx(index.begin(), index.end());
  for (int i : idx) {
    Require(i >= 0 && static_cast<std::size_t>(i) < v, ErrorCode::kInvalidArgument,
            "pick: index " + std::to_string(i) + " out of range");
  }
  Tensor<T> out = tape.MakeOutput({rows}, {&x});
  for (std::size_t r = 0; r < rows; ++r) out.mutable_data()[r] = x.data()[r * v + idx[r]];
  tape.Record("pick", {&x}, out, [x, out, idx = std::move(idx), v]() {
    const T* g = OutGrad(out);
    if (T* gx = GradOf(x)) {
      for (std::size_t r = 0; r < idx.size(); ++r) gx[r * v + idx[r]] += g[r];
    }
  });
  return out;
}

template <typename T>
Tensor<T> CausalAttention(Tape<T>& tape, const Tensor<T>& qkv, std::size_t n_heads,
                          std::span<const Segment> segments) {
  Require(qkv.rank() == 2 && qkv.dim(1) % 3 == 0, ErrorCode::kShapeMismatch,
          "attention: qkv must be [N, 3D], got " + ShapeString(qkv.shape()));
  const std::size_t n = qkv.dim(0), d = qkv.dim(1) / 3;
  Require(n_heads > 0 && d % n_heads == 0, ErrorCode::kShapeMismatch,
          "attention: width not divisible by head count");
  std::size_t covered = 0;
  for (const Segment& s : segments) {
    Require(s.offset == covered && s.length > 0, ErrorCode::kShapeMismatch,
            "attention: segments must tile the batch contiguously");
    covered += s.length;
  }
  Require(covered == n, ErrorCode::kShapeMismatch,
          "attention: segments cover " + std::to_string(covered) + " of " +
              std::to_string(n) + " rows");
  std::vector<Segment> segs(segments.begin(), segments.end());
  Tensor<T> out = tape.MakeOutput({n, d}, {&qkv});
  // Attention probabilities per (segment, head), kept for backward.
  std::vector<std::vector<T>> probs;
  probs.reserve(segs.size() * n_heads);
  const std::size_t hd = d / n_heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  for (const Segment& s : segs) {
    for (std::size_t h = 0; h < n_heads; ++h) {
      std::vector<T> p(s.length * s.length);
      kernels::AttentionHeadForward(qkv.data().data(), out.mutable_data().data(),
                                    p.data(), s.offset, s.length, d, h * hd, hd, scale);
      probs.push_back(std::move(p));
    }
  }
  CheckFinite<T>("attention", out.data());
  tape.Record("attention", {&qkv}, out,
              [qkv, out, segs = std::move(segs), probs = std::move(probs), n_heads,
               d, hd, scale]() {
    T* gq = GradOf(qkv);
    if (!gq) return;
    const T* g = OutGrad(out);
    std::size_t k = 0;
    for (const Segment& s : segs) {
      for (std::size_t h = 0; h < n_heads; ++h, ++k) {
        kernels::AttentionHeadBackward(qkv.data().data(), g, probs[k].data(), gq,
                                       s.offset, s.length, d, h * hd, hd, scale);
      }
    }
  });
  return out;
}

}  // namespace ops

// ------------------------------------------------------------ grad check

namespace {

double RelError(double analytic, double numeric) {
  const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

double EvalScalar(const ClosureFn& f) {
  Tape<double> tape(TapeMode::kInference);
  Tensor<double> y = f(tape);
  Require(y.numel() == 1, ErrorCode::kShapeMismatch,
          "grad check: function must return a scalar");
  const double v = y.item();
  Require(std::isfinite(v), ErrorCode::kNonFinite,
          "grad check: function value is not finite");
  return v;
}

}  // namespace

double GradCheckLeaves(const ClosureFn& f, std::span<Tensor<double>> leaves,
                       double h, std::size_t max_coords_per_leaf) {
  for (Tensor<double>& leaf : leaves) {
    leaf.set_requires_grad(true);
    leaf.zero_grad();
  }
  {
    Tape<double> tape;
    Tensor<double> y = f(tape);
    Require(y.numel() == 1, ErrorCode::kShapeMismatch,
            "grad check: function must return a scalar");
    Require(std::isfinite(y.item()), ErrorCode::kNonFinite,
            "grad check: function value is not finite");
    tape.Backward(y);
  }
  double worst = 0.0;
  for (Tensor<double>& leaf : leaves) {
    std::vector<double> analytic(leaf.numel(), 0.0);
    if (leaf.has_grad()) {
      std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());
    }
    std::size_t stride = 1;
    if (max_coords_per_leaf > 0 && leaf.numel() > max_coords_per_leaf) {
      stride = (leaf.numel() + max_coords_per_leaf - 1) / max_coords_per_leaf;
    }
    auto values = leaf.mutable_data();
    for (std::size_t i = 0; i < leaf.numel(); i += stride) {
      const double saved = values[i];
      const double hi = saved + h;
      const double lo = saved - h;
      values[i] = hi;
      const double up = EvalScalar(f);
      values[i] = lo;
      const double down = EvalScalar(f);
      values[i] = saved;
      worst = std::max(worst, RelError(analytic[i], (up - down) / (hi - lo)));
    }
  }
  return worst;
}

double GradCheck(const ScalarFn& f, Tensor<double> x, double h) {
  std::vector<Tensor<double>> leaves{x};
  return GradCheckLeaves([&](Tape<double>& tape) { return f(tape, x); }, leaves, h);
}

// ------------------------------------------------------- instantiations

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template void CheckFinite<float>(std::string_view, std::span<const float>);
template void CheckFinite<double>(std::string_view, std::span<const double>);

namespace ops {
#define WD_INSTANTIATE_OPS(T)                                                        \
  template Tensor<T> MatMul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> Add(Tape<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> Sub(Tape<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> Mul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> Scale(Tape<T>&, const Tensor<T>&, T);                           \
  template Tensor<T> Exp(Tape<T>&, const Tensor<T>&);                                \
  template Tensor<T> EmbedGather(Tape<T>&, const Tensor<T>&, std::span<const int>);  \
  template Tensor<T> LayerNorm(Tape<T>&, const Tensor<T>&, const Tensor<T>&,         \
                               const Tensor<T>&, T);                                 \
  template Tensor<T> Softmax(Tape<T>&, const Tensor<T>&);                            \
  template Tensor<T> LogSoftmax(Tape<T>&, const Tensor<T>&);                         \
  template Tensor<T> Gelu(Tape<T>&, const Tensor<T>&);                               \
  template Tensor<T> Reshape(Tape<T>&, const Tensor<T>&, Shape);                     \
  template Tensor<T> Slice(Tape<T>&, const Tensor<T>&, std::size_t, std::size_t,     \
                           std::size_t);                                             \
  template Tensor<T> ReduceSum(Tape<T>&, const Tensor<T>&);                          \
  template Tensor<T> ReduceMean(Tape<T>&, const Tensor<T>&);                         \
  template Tensor<T> Pick(Tape<T>&, const Tensor<T>&, std::span<const int>);         \
  template Tensor<T> CausalAttention(Tape<T>&, const Tensor<T>&, std::size_t,        \
                                     std::span<const Segment>);
WD_INSTANTIATE_OPS(float)
WD_INSTANTIATE_OPS(double)
#undef WD_INSTANTIATE_OPS
}  // namespace ops

}  // namespace wd
