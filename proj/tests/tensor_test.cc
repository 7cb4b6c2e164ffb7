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

#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "warmdistill/error.h"
#include "warmdistill/tensor.h"

namespace wd {
namespace {

using T64 = Tensor<double>;

T64 RandomTensor(std::mt19937_64& rng, Shape shape, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(NumElements(shape));
  for (double& e : v) e = n(rng);
  return T64::FromData(std::move(shape), std::move(v));
}

TEST_CASE("tensor: shape invariants") {
  CHECK_THROWS_AS(T64::FromData({2, 2}, {1, 2, 3}), Error);
  CHECK_THROWS_AS(T64::Zeros({0, 2}), Error);
  T64 t = T64::Zeros({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.last_dim() == 3);
  CHECK_FALSE(t.has_grad());
}

TEST_CASE("tensor: softmax examples") {
  Tape<double> tape(TapeMode::kInference);
  T64 x = T64::FromData({1, 2}, {0, 0});
  T64 y = ops::Softmax(tape, x);
  CHECK(y.data()[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(y.data()[1] == doctest::Approx(0.5).epsilon(1e-15));
  const double tau = 2.0;
  T64 z = ops::Softmax(tape, ops::Scale(tape, T64::FromData({1, 2}, {2, 0}), 1.0 / tau));
  const double sig = 1.0 / (1.0 + std::exp(-1.0));
  CHECK(z.data()[0] == doctest::Approx(sig).epsilon(1e-12));
  CHECK(z.data()[1] == doctest::Approx(1 - sig).epsilon(1e-12));
  CHECK(z.data()[0] == doctest::Approx(0.7311).epsilon(1e-4));
}

TEST_CASE("tensor: matmul identity") {
  Tape<double> tape;
  std::mt19937_64 rng(3);
  T64 a = RandomTensor(rng, {2, 2});
  T64 id = T64::FromData({2, 2}, {1, 0, 0, 1});
  T64 y = ops::MatMul(tape, id, a);
  for (std::size_t i = 0; i < 4; ++i) CHECK(y.data()[i] == a.data()[i]);
}

TEST_CASE("tensor: softmax rows and log_softmax consistency") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Tape<float> tape(TapeMode::kInference);
    std::normal_distribution<float> n(0.f, 3.f);
    std::vector<float> v(5 * 11);
    for (float& e : v) e = n(rng);
    Tensor<float> x = Tensor<float>::FromData({5, 11}, v);
    Tensor<float> s = ops::Softmax(tape, x);
    Tensor<float> ls = ops::LogSoftmax(tape, x);
    for (std::size_t r = 0; r < 5; ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < 11; ++c) {
        sum += s.data()[r * 11 + c];
        CHECK(std::fabs(std::log(s.data()[r * 11 + c]) - ls.data()[r * 11 + c]) < 1e-5);
      }
      CHECK(std::fabs(sum - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("backward: sum of squares") {
  Tape<double> tape;
  T64 x = T64::FromData({3}, {1, 2, 3}, true);
  T64 y = ops::ReduceSum(tape, ops::Mul(tape, x, x));
  tape.Backward(y);
  CHECK(x.grad()[0] == 2.0);
  CHECK(x.grad()[1] == 4.0);
  CHECK(x.grad()[2] == 6.0);
}

TEST_CASE("backward: log_softmax pick gradient") {
  Tape<double> tape;
  T64 x = T64::FromData({1, 2}, {0, 0}, true);
  const int target = 0;
  T64 y = ops::Pick(tape, ops::LogSoftmax(tape, x), std::span<const int>(&target, 1));
  T64 r = ops::ReduceSum(tape, y);
  tape.Backward(r);
  CHECK(x.grad()[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(x.grad()[1] == doctest::Approx(-0.5).epsilon(1e-15));
  const double err = GradCheck(
      [&](Tape<double>& t, const T64& in) {
        return ops::ReduceSum(
            t, ops::Pick(t, ops::LogSoftmax(t, in), std::span<const int>(&target, 1)));
      },
      T64::FromData({1, 2}, {0, 0}));
  CHECK(err < 1e-8);
}

TEST_CASE("backward: matmul chain of depth 3") {
  std::mt19937_64 rng(11);
  T64 a = RandomTensor(rng, {3, 4});
  T64 b = RandomTensor(rng, {4, 5});
  T64 c = RandomTensor(rng, {5, 2});
  T64 d = RandomTensor(rng, {2, 3});
  std::vector<T64> leaves{a, b, c, d};
  const double err = GradCheckLeaves(
      [&](Tape<double>& t) {
        T64 y = ops::MatMul(t, ops::MatMul(t, ops::MatMul(t, a, b), c), d);
        return ops::ReduceSum(t, ops::Mul(t, y, y));
      },
      leaves);
  CHECK(err < 1e-4);
}

TEST_CASE("backward: errors") {
  Tape<double> tape;
  T64 x = T64::FromData({2}, {1, 2}, true);
  T64 y = ops::Scale(tape, x, 2.0);
  CHECK_THROWS_AS(tape.Backward(y), Error);
  T64 s = ops::ReduceSum(tape, y);
  tape.Backward(s);
  try {
    tape.Backward(s);
    FAIL("second backward accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kState);
  }
}

TEST_CASE("backward: visits each entry once in reverse order") {
  Tape<double> tape;
  T64 x = T64::FromData({2}, {1, 2}, true);
  T64 a = ops::Scale(tape, x, 3.0);
  T64 b = ops::Exp(tape, a);
  T64 c = ops::ReduceSum(tape, b);
  REQUIRE(tape.size() == 3);
  const auto& e = tape.entries();
  for (std::size_t i = 1; i < e.size(); ++i) {
    for (std::uint64_t in : e[i].input_ids) CHECK(in < e[i].output_id);
  }
  tape.Backward(c);
  CHECK(x.grad()[0] == doctest::Approx(3 * std::exp(3.0)));
}

TEST_CASE("tensor: non-finite output is an error") {
  Tape<double> tape;
  T64 x = T64::FromData({1}, {1000.0});
  try {
    ops::Exp(tape, x);
    FAIL("overflow accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonFinite);
  }
}

TEST_CASE("grad_check: linear function is exact") {
  // Dyadic inputs and a power-of-two step keep every sum exact.
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> k(-64, 64);
  std::vector<double> v(12);
  for (double& e : v) e = k(rng) / 8.0;
  const double err = GradCheck(
      [](Tape<double>& t, const T64& in) { return ops::ReduceSum(t, in); },
      T64::FromData({4, 3}, v), std::ldexp(1.0, -20));
  CHECK(err == 0.0);
}

TEST_CASE("grad_check: wrong backward rule is caught") {
  // Square with a deliberately wrong derivative (x instead of 2x).
  auto bad_square = [](Tape<double>& t, const T64& in) {
    T64 out = t.MakeOutput(in.shape(), {&in});
    auto v = out.node()->value.data();
    for (std::size_t i = 0; i < in.numel(); ++i) v[i] = in.data()[i] * in.data()[i];
    auto in_node = in.node();
    auto out_node = out.node();
    t.Record("bad_square", {&in}, out, [in_node, out_node] {
      double* g = in_node->EnsureGrad();
      for (std::size_t i = 0; i < in_node->value.size(); ++i) {
        g[i] += out_node->grad[i] * in_node->value[i];
      }
    });
    return ops::ReduceSum(t, out);
  };
  std::mt19937_64 rng(9);
  CHECK(GradCheck(bad_square, RandomTensor(rng, {5}, 2.0)) > 1e-2);
}

// Every primitive, 20 random inputs each, in 64-bit mode.
TEST_CASE("grad_check: primitives") {
  std::mt19937_64 rng(13);
  auto weighted = [&](Tape<double>& t, const T64& y, const T64& w) {
    return ops::ReduceSum(t, ops::Mul(t, y, w));
  };
  for (int trial = 0; trial < 20; ++trial) {
    T64 a = RandomTensor(rng, {3, 4});
    T64 b = RandomTensor(rng, {4, 2});
    T64 same = RandomTensor(rng, {3, 4});
    T64 bias = RandomTensor(rng, {4});
    T64 w34 = RandomTensor(rng, {3, 4});
    T64 w32 = RandomTensor(rng, {3, 2});
    T64 gain = RandomTensor(rng, {4});
    T64 table = RandomTensor(rng, {6, 4});
    const std::vector<int> ids{5, 0, 5};
    const std::vector<int> pick{1, 3, 0};
    auto check = [](double err) { CHECK(err < 1e-6); };

    std::vector<T64> l1{a, b};
    check(GradCheckLeaves(
        [&](Tape<double>& t) { return weighted(t, ops::MatMul(t, a, b), w32); }, l1));
    std::vector<T64> l2{a, same};
    check(GradCheckLeaves(
        [&](Tape<double>& t) { return weighted(t, ops::Add(t, a, same), w34); }, l2));
    check(GradCheckLeaves(
        [&](Tape<double>& t) { return weighted(t, ops::Sub(t, a, same), w34); }, l2));
    check(GradCheckLeaves(
        [&](Tape<double>& t) { return weighted(t, ops::Mul(t, a, same), w34); }, l2));
    std::vector<T64> l3{a, bias};
    check(GradCheckLeaves(
        [&](Tape<double>& t) { return weighted(t, ops::Add(t, a, bias), w34); }, l3));
    std::vector<T64> l4{a};
    check(GradCheckLeaves(
        [&](Tape<double>& t) { return weighted(t, ops::Scale(t, a, -1.7), w34); }, l4));
    check(GradCheckLeaves(
        [&](Tape<double>& t) { return weighted(t, ops::Exp(t, a), w34); }, l4));
    check(GradCheckLeaves(
        [&](Tape<double>& t) { return weighted(t, ops::Softmax(t, a), w34); }, l4));
    check(GradCheckLeaves(
        [&](Tape<double>& t) { return weighted(t, ops::LogSoftmax(t, a), w34); }, l4));
    check(GradCheckLeaves(
        [&](Tape<double>& t) { return weighted(t, ops::Gelu(t, a), w34); }, l4));
    check(GradCheckLeaves(
        [&](Tape<double>& t) {
          return weighted(t, ops::Reshape(t, a, {4, 3}), ops::Reshape(t, w34, {4, 3}));
        },
        l4));
    check(GradCheckLeaves(
        [&](Tape<double>& t) {
          return weighted(t, ops::Slice(t, a, 1, 1, 3), ops::Slice(t, w34, 1, 1, 3));
        },
        l4));
    check(GradCheckLeaves(
        [&](Tape<double>& t) {
          return ops::ReduceMean(t, ops::Mul(t, a, a));
        },
        l4));
    check(GradCheckLeaves(
        [&](Tape<double>& t) { return ops::ReduceSum(t, ops::Pick(t, a, pick)); }, l4));
    std::vector<T64> l5{a, gain, bias};
    check(GradCheckLeaves(
        [&](Tape<double>& t) { return weighted(t, ops::LayerNorm(t, a, gain, bias), w34); },
        l5));
    std::vector<T64> l6{table};
    check(GradCheckLeaves(
        [&](Tape<double>& t) { return weighted(t, ops::EmbedGather(t, table, ids), w34); },
        l6));
  }
}

TEST_CASE("grad_check: causal attention over packed segments") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    T64 qkv = RandomTensor(rng, {5, 12});
    T64 w = RandomTensor(rng, {5, 4});
    const std::vector<Segment> segs{{0, 2}, {2, 3}};
    std::vector<T64> leaves{qkv};
    const double err = GradCheckLeaves(
        [&](Tape<double>& t) {
          return ops::ReduceSum(t, ops::Mul(t, ops::CausalAttention(t, qkv, 2, segs), w));
        },
        leaves);
    CHECK(err < 1e-6);
  }
}

TEST_CASE("causal attention: first row attends only to itself") {
  std::mt19937_64 rng(19);
  T64 qkv = RandomTensor(rng, {3, 6});
  const std::vector<Segment> segs{{0, 3}};
  Tape<double> tape(TapeMode::kInference);
  T64 out = ops::CausalAttention(tape, qkv, 1, segs);
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(out.data()[c] == doctest::Approx(qkv.data()[4 + c]).epsilon(1e-12));
  }
}

}  // namespace
}  // namespace wd
