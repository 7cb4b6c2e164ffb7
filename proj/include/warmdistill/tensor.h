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

#ifndef WARMDISTILL_TENSOR_H_
#define WARMDISTILL_TENSOR_H_

// Dense row-major tensors with a reverse-mode tape.
//
// A Tensor is a shared handle to a node holding the value and, after
// backward, the gradient. Operations live in wd::ops and take the tape
// explicitly; an op is recorded only when at least one input requires grad
// and the tape is in recording mode. Tapes are single-threaded.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "warmdistill/error.h"

namespace wd {

using Shape = std::vector<std::size_t>;

std::size_t NumElements(const Shape& shape);
std::string ShapeString(const Shape& shape);

namespace detail {

template <typename T>
struct Node {
  std::uint64_t id = 0;
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;

  T* EnsureGrad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad.data();
  }
};

std::uint64_t NextNodeId();

}  // namespace detail

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor Zeros(Shape shape, bool requires_grad = false);
  static Tensor FromData(Shape shape, std::vector<T> data,
                         bool requires_grad = false);
  static Tensor Scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }
  // Extent of the last axis; 1 for rank-0 tensors.
  std::size_t last_dim() const {
    return node_->shape.empty() ? 1 : node_->shape.back();
  }

  std::span<const T> data() const { return node_->value; }
  // Direct write access. Only meaningful on leaves (parameters, inputs).
  std::span<T> mutable_data() { return node_->value; }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return std::span<T>(node_->EnsureGrad(), numel()); }
  void zero_grad() { node_->grad.clear(); }

  std::uint64_t id() const { return node_->id; }
  // Copy of the value as a fresh constant leaf.
  Tensor Detach() const;
  // Same value, new independent leaf that requires grad iff `requires_grad`.
  Tensor Clone(bool requires_grad) const;

  const std::shared_ptr<detail::Node<T>>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node<T>> node)
      : node_(std::move(node)) {}
  template <typename U>
  friend class Tape;

  std::shared_ptr<detail::Node<T>> node_;
};

enum class TapeMode { kRecord, kInference };

template <typename T>
class Tape {
 public:
  using BackwardRule = std::function<void()>;

  struct Entry {
    std::string_view op;
    std::vector<std::uint64_t> input_ids;
    std::uint64_t output_id = 0;
    std::shared_ptr<detail::Node<T>> output;
    BackwardRule rule;
  };

  explicit Tape(TapeMode mode = TapeMode::kRecord) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return mode_ == TapeMode::kRecord; }

  // Allocates an output node. requires_grad is set when recording and any
  // input requires grad.
  Tensor<T> MakeOutput(Shape shape, std::initializer_list<const Tensor<T>*> inputs) const;
  Tensor<T> MakeOutput(Shape shape, std::span<const Tensor<T>> inputs) const;

  // Registers the backward rule for `output` if it requires grad. The rule
  // reads output's grad and accumulates into the inputs' grads.
  void Record(std::string_view op, std::initializer_list<const Tensor<T>*> inputs,
              const Tensor<T>& output, BackwardRule rule);
  void Record(std::string_view op, std::span<const Tensor<T>> inputs,
              const Tensor<T>& output, BackwardRule rule);

  // Seeds d(root)/d(root) = 1 and runs every rule in reverse order. A tape
  // can be consumed once.
  void Backward(const Tensor<T>& root);

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  TapeMode mode_;
  bool consumed_ = false;
  std::vector<Entry> entries_;
};

// Segment of a packed batch: positions [offset, offset + length) form one
// causal sequence.
struct Segment {
  std::size_t offset = 0;
  std::size_t length = 0;
};

namespace ops {

// [M,K] x [K,N] -> [M,N].
template <typename T>
Tensor<T> MatMul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

// Elementwise a + b. `b` may also be 1-D with extent a.last_dim(), in which
// case it is added to every row (bias add).
template <typename T>
Tensor<T> Add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> Sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> Mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> Scale(Tape<T>& tape, const Tensor<T>& a, T factor);

template <typename T>
Tensor<T> Exp(Tape<T>& tape, const Tensor<T>& a);

// Rows of `table` ([R,D]) selected by `ids` -> [ids.size(), D]. Backward
// scatter-adds into the table.
template <typename T>
Tensor<T> EmbedGather(Tape<T>& tape, const Tensor<T>& table,
                      std::span<const int> ids);

template <typename T>
Tensor<T> LayerNorm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gain,
                    const Tensor<T>& bias, T eps = T(1e-5));

template <typename T>
Tensor<T> Softmax(Tape<T>& tape, const Tensor<T>& x);

template <typename T>
Tensor<T> LogSoftmax(Tape<T>& tape, const Tensor<T>& x);

// tanh approximation.
template <typename T>
Tensor<T> Gelu(Tape<T>& tape, const Tensor<T>& x);

template <typename T>
Tensor<T> Reshape(Tape<T>& tape, const Tensor<T>& x, Shape shape);

// Half-open range [begin, end) along `axis`.
template <typename T>
Tensor<T> Slice(Tape<T>& tape, const Tensor<T>& x, std::size_t axis,
                std::size_t begin, std::size_t end);

template <typename T>
Tensor<T> ReduceSum(Tape<T>& tape, const Tensor<T>& x);

template <typename T>
Tensor<T> ReduceMean(Tape<T>& tape, const Tensor<T>& x);

// x[i, index[i]] for a [N,V] input -> [N].
template <typename T>
Tensor<T> Pick(Tape<T>& tape, const Tensor<T>& x, std::span<const int> index);

// Multi-head causal self-attention over a packed batch. `qkv` is [N, 3D]
// holding queries, keys and values side by side; returns [N, D]. Positions
// attend only within their own segment.
template <typename T>
Tensor<T> CausalAttention(Tape<T>& tape, const Tensor<T>& qkv,
                          std::size_t n_heads, std::span<const Segment> segments);

}  // namespace ops

// Throws kNonFinite naming `op` if any value is NaN or Inf.
template <typename T>
void CheckFinite(std::string_view op, std::span<const T> values);

// Max over coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|)
// with central differences of step `h`. `f` must build a scalar on the tape
// it is given; `x` is used as the differentiation leaf.
using ScalarFn =
    std::function<Tensor<double>(Tape<double>&, const Tensor<double>&)>;
double GradCheck(const ScalarFn& f, Tensor<double> x, double h = 1e-6);

// Same check over several leaves captured by `f`. Checks every coordinate
// unless `max_coords_per_leaf` is non-zero, in which case an evenly strided
// subset is used.
using ClosureFn = std::function<Tensor<double>(Tape<double>&)>;
double GradCheckLeaves(const ClosureFn& f, std::span<Tensor<double>> leaves,
                       double h = 1e-6, std::size_t max_coords_per_leaf = 0);

}  // namespace wd

#endif  // WARMDISTILL_TENSOR_H_
