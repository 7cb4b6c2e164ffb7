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

#ifndef WARMDISTILL_SRC_KERNELS_H_
#define WARMDISTILL_SRC_KERNELS_H_

// Numeric inner loops shared by the taped ops and the inference decoder, so
// both paths compute bit-identical row transforms.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>

namespace wd::kernels {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

// c = a[m,k] * b[k,n], row-major.
template <typename T>
void Gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  Eigen::Map<const RowMat<T>> am(a, m, k);
  Eigen::Map<const RowMat<T>> bm(b, k, n);
  Eigen::Map<RowMat<T>>(c, m, n).noalias() = am * bm;
}

template <typename T>
void LayerNormRows(const T* x, const T* gain, const T* bias, T* y, T* xhat,
                   T* rstd, std::size_t rows, std::size_t d, T eps) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x + r * d;
    T mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= T(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= T(d);
    const T inv = T(1) / std::sqrt(var + eps);
    if (rstd) rstd[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (xr[j] - mean) * inv;
      if (xhat) xhat[r * d + j] = h;
      y[r * d + j] = h * gain[j] + bias[j];
    }
  }
}

template <typename T>
void SoftmaxRow(const T* x, T* y, std::size_t n) {
  T mx = x[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
  T total = 0;
  for (std::size_t j = 0; j < n; ++j) {
    y[j] = std::exp(x[j] - mx);
    total += y[j];
  }
  for (std::size_t j = 0; j < n; ++j) y[j] /= total;
}

template <typename T>
void LogSoftmaxRow(const T* x, T* y, std::size_t n) {
  T mx = x[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
  T total = 0;
  for (std::size_t j = 0; j < n; ++j) total += std::exp(x[j] - mx);
  const T lse = mx + std::log(total);
  for (std::size_t j = 0; j < n; ++j) y[j] = x[j] - lse;
}

inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
inline constexpr double kGeluA = 0.044715;

template <typename T>
void GeluForward(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const T v = x[i];
    const T u = T(kGeluC) * (v + T(kGeluA) * v * v * v);
    y[i] = T(0.5) * v * (T(1) + std::tanh(u));
  }
}

template <typename T>
void GeluBackward(const T* x, const T* g, T* gx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const T v = x[i];
    const T u = T(kGeluC) * (v + T(kGeluA) * v * v * v);
    const T t = std::tanh(u);
    const T du = T(kGeluC) * (T(1) + T(3 * kGeluA) * v * v);
    gx[i] += g[i] * (T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * du);
  }
}

// One head of causal attention over rows [offset, offset + len) of a packed
// [N, 3D] qkv buffer. Writes the head's columns of out ([N, D]) and the
// row-stochastic probability matrix p ([len, len], zero above the diagonal).
template <typename T>
void AttentionHeadForward(const T* qkv, T* out, T* p, std::size_t offset,
                          std::size_t len, std::size_t d, std::size_t col,
                          std::size_t hd, T scale) {
  const Eigen::OuterStride<> s3(static_cast<Eigen::Index>(3 * d));
  ConstStridedMap<T> q(qkv + offset * 3 * d + col, len, hd, s3);
  ConstStridedMap<T> k(qkv + offset * 3 * d + d + col, len, hd, s3);
  ConstStridedMap<T> v(qkv + offset * 3 * d + 2 * d + col, len, hd, s3);
  Eigen::Map<RowMat<T>> pm(p, len, len);
  pm.noalias() = q * k.transpose();
  for (std::size_t i = 0; i < len; ++i) {
    T* row = p + i * len;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j <= i; ++j) {
      row[j] *= scale;
      mx = std::max(mx, row[j]);
    }
    T total = 0;
    for (std::size_t j = 0; j <= i; ++j) {
      row[j] = std::exp(row[j] - mx);
      total += row[j];
    }
    for (std::size_t j = 0; j <= i; ++j) row[j] /= total;
    for (std::size_t j = i + 1; j < len; ++j) row[j] = 0;
  }
  StridedMap<T> o(out + offset * d + col, len, hd,
                  Eigen::OuterStride<>(static_cast<Eigen::Index>(d)));
  o.noalias() = pm * v;
}

template <typename T>
void AttentionHeadBackward(const T* qkv, const T* gout, const T* p, T* gqkv,
                           std::size_t offset, std::size_t len, std::size_t d,
                           std::size_t col, std::size_t hd, T scale) {
  const Eigen::OuterStride<> s3(static_cast<Eigen::Index>(3 * d));
  const Eigen::OuterStride<> s1(static_cast<Eigen::Index>(d));
  ConstStridedMap<T> q(qkv + offset * 3 * d + col, len, hd, s3);
  ConstStridedMap<T> k(qkv + offset * 3 * d + d + col, len, hd, s3);
  ConstStridedMap<T> v(qkv + offset * 3 * d + 2 * d + col, len, hd, s3);
  ConstStridedMap<T> go(gout + offset * d + col, len, hd, s1);
  Eigen::Map<const RowMat<T>> pm(p, len, len);
  StridedMap<T> gq(gqkv + offset * 3 * d + col, len, hd, s3);
  StridedMap<T> gk(gqkv + offset * 3 * d + d + col, len, hd, s3);
  StridedMap<T> gv(gqkv + offset * 3 * d + 2 * d + col, len, hd, s3);
  gv.noalias() += pm.transpose() * go;
  RowMat<T> ds = go * v.transpose();
  for (std::size_t i = 0; i < len; ++i) {
    T dot = 0;
    for (std::size_t j = 0; j <= i; ++j) dot += ds(i, j) * pm(i, j);
    for (std::size_t j = 0; j < len; ++j) {
      ds(i, j) = j <= i ? pm(i, j) * (ds(i, j) - dot) * scale : T(0);
    }
  }
  gq.noalias() += ds * k;
  gk.noalias() += ds.transpose() * q;
}

}  // namespace wd::kernels

#endif  // WARMDISTILL_SRC_KERNELS_H_
