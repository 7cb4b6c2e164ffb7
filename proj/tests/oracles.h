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

// Independent reference implementations used by the tests. They share no
// code with the library and favour directness over speed.

#ifndef WARMDISTILL_TESTS_ORACLES_H_
#define WARMDISTILL_TESTS_ORACLES_H_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace oracle {

inline double Clamp(double x) { return x < 1e-12 ? 1e-12 : x; }

inline double Kl(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == 0.0) continue;
    s += a[i] * (std::log(Clamp(a[i])) - std::log(Clamp(b[i])));
  }
  return s;
}

inline double Fkl(const std::vector<double>& p, const std::vector<double>& q) {
  return Kl(p, q);
}
inline double Rkl(const std::vector<double>& p, const std::vector<double>& q) {
  return Kl(q, p);
}
inline double Tvd(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::fabs(p[i] - q[i]);
  return 0.5 * s;
}
inline double Js(const std::vector<double>& p, const std::vector<double>& q) {
  std::vector<double> m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
  return 0.5 * Kl(p, m) + 0.5 * Kl(q, m);
}
inline double SkewFkl(const std::vector<double>& p, const std::vector<double>& q,
                      double lambda) {
  std::vector<double> m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = lambda * p[i] + (1 - lambda) * q[i];
  return Kl(p, m);
}
// Head: fewest top teacher tokens (ties by lower index) covering half the mass.
inline double AklWeight(const std::vector<double>& p, const std::vector<double>& q) {
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
  double covered = 0.0, head = 0.0, total = 0.0;
  std::vector<bool> in_head(p.size(), false);
  for (std::size_t k : order) {
    if (covered >= 0.5) break;
    in_head[k] = true;
    covered += p[k];
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = std::fabs(p[i] - q[i]);
    total += d;
    if (in_head[i]) head += d;
  }
  return total == 0.0 ? 0.5 : head / total;
}
inline double Akl(const std::vector<double>& p, const std::vector<double>& q) {
  const double w = AklWeight(p, q);
  return w * Fkl(p, q) + (1 - w) * Rkl(p, q);
}

inline std::vector<double> RandomSimplex(std::mt19937_64& rng, std::size_t v) {
  std::gamma_distribution<double> g(0.7, 1.0);
  std::vector<double> x(v);
  double s = 0.0;
  for (double& e : x) {
    e = g(rng) + 1e-6;
    s += e;
  }
  for (double& e : x) e /= s;
  return x;
}

inline std::vector<double> SoftmaxRow(const double* z, std::size_t v, double tau) {
  double mx = z[0] / tau;
  for (std::size_t i = 1; i < v; ++i) mx = std::max(mx, z[i] / tau);
  std::vector<double> out(v);
  double s = 0.0;
  for (std::size_t i = 0; i < v; ++i) {
    out[i] = std::exp(z[i] / tau - mx);
    s += out[i];
  }
  for (double& e : out) e /= s;
  return out;
}

inline double Sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Longest common subsequence by enumerating every subsequence of the shorter
// list and testing membership in the longer one.
inline std::size_t BruteForceLcs(const std::vector<std::string>& a,
                                 const std::vector<std::string>& b) {
  const auto& s = a.size() <= b.size() ? a : b;
  const auto& t = a.size() <= b.size() ? b : a;
  std::size_t best = 0;
  const std::size_t n = s.size();
  for (unsigned long mask = 0; mask < (1ul << n); ++mask) {
    const std::size_t bits = static_cast<std::size_t>(__builtin_popcountl(mask));
    if (bits <= best) continue;
    std::size_t j = 0;
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      if (!(mask >> i & 1ul)) continue;
      while (j < t.size() && t[j] != s[i]) ++j;
      if (j == t.size()) ok = false;
      else ++j;
    }
    if (ok) best = bits;
  }
  return best;
}

inline double RougeF(std::size_t lcs, std::size_t cand, std::size_t ref) {
  if (lcs == 0 || cand == 0 || ref == 0) return 0.0;
  const double p = static_cast<double>(lcs) / cand;
  const double r = static_cast<double>(lcs) / ref;
  return 2 * p * r / (p + r);
}

}  // namespace oracle

#endif  // WARMDISTILL_TESTS_ORACLES_H_
