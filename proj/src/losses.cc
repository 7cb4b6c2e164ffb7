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

#include "warmdistill/losses.h"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "kernels.h"

namespace wd {

const char* DistillKindName(DistillKind kind) {
  switch (kind) {
    case DistillKind::kSeqKdCe: return "seqkd_ce";
    case DistillKind::kFkl: return "fkl";
    case DistillKind::kRkl: return "rkl";
    case DistillKind::kTvd: return "tvd";
    case DistillKind::kJs: return "js";
    case DistillKind::kSkewFkl: return "skew_fkl";
    case DistillKind::kAkl: return "akl";
  }
  return "fkl";
}

DistillKind ParseDistillKind(std::string_view name) {
  for (DistillKind k : {DistillKind::kSeqKdCe, DistillKind::kFkl, DistillKind::kRkl,
                        DistillKind::kTvd, DistillKind::kJs, DistillKind::kSkewFkl,
                        DistillKind::kAkl}) {
    if (name == DistillKindName(k)) return k;
  }
  Fail(ErrorCode::kInvalidArgument, "unknown distillation kind '" + std::string(name) + "'");
}

DistillConfig MakeDistillConfig(DistillKind kind) {
  DistillConfig c;
  c.kind = kind;
  if (kind == DistillKind::kSkewFkl) c.skew = 0.1;
  return c;
}

void ValidateDistillConfig(const DistillConfig& c) {
  Require(c.temperature > 0.0, ErrorCode::kInvalidArgument, "temperature must be > 0");
  Require(c.mix >= 0.0 && c.mix <= 1.0, ErrorCode::kInvalidArgument,
          "mix coefficient must lie in [0, 1]");
  const bool skewed = c.kind == DistillKind::kSkewFkl;
  Require(c.skew.has_value() == skewed, ErrorCode::kInvalidArgument,
          "skew lambda must be set exactly when kind is skew_fkl");
  if (skewed) {
    Require(*c.skew >= 0.0 && *c.skew <= 1.0, ErrorCode::kInvalidArgument,
            "skew lambda must lie in [0, 1]");
  }
}

void ValidateDistPair(const DistPair& pair) {
  Require(!pair.p.empty() && pair.p.size() == pair.q.size(), ErrorCode::kInvalidArgument,
          "distribution rows must be non-empty and of equal length");
  for (const std::vector<double>* row : {&pair.p, &pair.q}) {
    double total = 0.0;
    for (double v : *row) {
      Require(v >= 0.0 && std::isfinite(v), ErrorCode::kInvalidArgument,
              "distribution entries must be finite and non-negative");
      total += v;
    }
    Require(std::abs(total - 1.0) <= 1e-6, ErrorCode::kInvalidArgument,
            "distribution row sums to " + std::to_string(total) + ", expected 1");
  }
}

namespace {

template <typename T>
void HeadMask(const T* p, std::size_t v, std::vector<std::uint8_t>& mask) {
  std::vector<std::size_t> order(v);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [p](std::size_t a, std::size_t b) { return p[a] > p[b]; });
  mask.assign(v, 0);
  T cum = 0;
  for (std::size_t idx : order) {
    mask[idx] = 1;
    cum += p[idx];
    if (cum >= T(0.5)) break;
  }
}

template <typename T>
T SafeLog(T x) {
  return std::log(std::max(x, T(kProbFloor)));
}

template <typename T>
T DSafeLog(T x) {
  return x > T(kProbFloor) ? T(1) / x : T(0);
}

// D(p || q) for one row; when `gq` is non-null it receives dD/dq.
template <typename T>
T RowDivergence(const T* p, const T* q, std::size_t v, DistillKind kind, T lambda, T* gq) {
  T value = 0;
  switch (kind) {
    case DistillKind::kFkl:
      for (std::size_t k = 0; k < v; ++k) {
        if (p[k] > 0) value += p[k] * (SafeLog(p[k]) - SafeLog(q[k]));
        if (gq) gq[k] = -p[k] * DSafeLog(q[k]);
      }
      return value;
    case DistillKind::kRkl:
      for (std::size_t k = 0; k < v; ++k) {
        if (q[k] > 0) value += q[k] * (SafeLog(q[k]) - SafeLog(p[k]));
        if (gq) gq[k] = SafeLog(q[k]) + q[k] * DSafeLog(q[k]) - SafeLog(p[k]);
      }
      return value;
    case DistillKind::kTvd:
      for (std::size_t k = 0; k < v; ++k) {
        value += std::abs(p[k] - q[k]);
        if (gq) gq[k] = T(0.5) * T((q[k] > p[k]) - (q[k] < p[k]));
      }
      return T(0.5) * value;
    case DistillKind::kJs:
      for (std::size_t k = 0; k < v; ++k) {
        const T m = T(0.5) * (p[k] + q[k]);
        const T lm = SafeLog(m);
        // Summing both halves before accumulating keeps the value exactly
        // symmetric in (p, q).
        const T a = p[k] > 0 ? p[k] * (SafeLog(p[k]) - lm) : T(0);
        const T b = q[k] > 0 ? q[k] * (SafeLog(q[k]) - lm) : T(0);
        value += T(0.5) * (a + b);
        if (gq) {
          gq[k] = T(0.5) * (SafeLog(q[k]) - lm) + T(0.5) * q[k] * DSafeLog(q[k]) -
                  T(0.25) * (p[k] + q[k]) * DSafeLog(m);
        }
      }
      return value;
    case DistillKind::kSkewFkl:
      for (std::size_t k = 0; k < v; ++k) {
        // Written as p + (1 - lambda)(q - p) so the mixture equals p exactly
        // when q == p.
        const T mix = p[k] + (T(1) - lambda) * (q[k] - p[k]);
        if (p[k] > 0) value += p[k] * (SafeLog(p[k]) - SafeLog(mix));
        if (gq) gq[k] = -p[k] * (T(1) - lambda) * DSafeLog(mix);
      }
      return value;
    case DistillKind::kAkl: {
      std::vector<T> gf(gq ? v : 0), gr(gq ? v : 0);
      const T fkl = RowDivergence(p, q, v, DistillKind::kFkl, T(0), gq ? gf.data() : nullptr);
      const T rkl = RowDivergence(p, q, v, DistillKind::kRkl, T(0), gq ? gr.data() : nullptr);
      std::vector<std::uint8_t> head;
      HeadMask(p, v, head);
      T all = 0, top = 0;
      for (std::size_t k = 0; k < v; ++k) {
        const T gap = std::abs(p[k] - q[k]);
        all += gap;
        if (head[k]) top += gap;
      }
      const T w = all > 0 ? top / all : T(0.5);
      if (gq) {
        for (std::size_t k = 0; k < v; ++k) {
          T dw = 0;
          if (all > 0) {
            const T sign = T((q[k] > p[k]) - (q[k] < p[k]));
            dw = sign * (T(head[k]) - w) / all;
          }
          gq[k] = w * gf[k] + (T(1) - w) * gr[k] + (fkl - rkl) * dw;
        }
      }
      return w * fkl + (T(1) - w) * rkl;
    }
    case DistillKind::kSeqKdCe:
      break;
  }
  Fail(ErrorCode::kInvalidArgument, "seqkd_ce has no distribution divergence");
}

}  // namespace

std::vector<std::size_t> TeacherHead(std::span<const double> p) {
  std::vector<std::uint8_t> mask;
  HeadMask(p.data(), p.size(), mask);
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (mask[k]) out.push_back(k);
  }
  return out;
}

double AklWeight(std::span<const double> p, std::span<const double> q) {
  Require(p.size() == q.size() && !p.empty(), ErrorCode::kInvalidArgument,
          "akl weight needs equal-length rows");
  std::vector<std::uint8_t> head;
  HeadMask(p.data(), p.size(), head);
  double all = 0, top = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double gap = std::abs(p[k] - q[k]);
    all += gap;
    if (head[k]) top += gap;
  }
  return all > 0 ? top / all : 0.5;
}

double Divergence(const DistPair& pair, const DistillConfig& config) {
  ValidateDistillConfig(config);
  ValidateDistPair(pair);
  return RowDivergence(pair.p.data(), pair.q.data(), pair.p.size(), config.kind,
                       config.skew.value_or(0.0), static_cast<double*>(nullptr));
}

template <typename T>
Tensor<T> CeLoss(Tape<T>& tape, const Tensor<T>& logits, std::span<const int> targets,
                 Reduction reduction) {
  Require(logits.rank() == 2 && logits.dim(0) == targets.size(), ErrorCode::kShapeMismatch,
          "ce_loss: " + std::to_string(targets.size()) + " targets for logits " +
              ShapeString(logits.shape()));
  const std::size_t m = logits.dim(0), v = logits.dim(1);
  std::vector<int> tgt(targets.begin(), targets.end());
  for (int t : tgt) {
    Require(t >= 0 && static_cast<std::size_t>(t) < v, ErrorCode::kInvalidArgument,
            "ce_loss: target out of range");
  }
  std::vector<T> logp(m * v);
  T total = 0;
  for (std::size_t r = 0; r < m; ++r) {
    kernels::LogSoftmaxRow(logits.data().data() + r * v, logp.data() + r * v, v);
    total -= logp[r * v + static_cast<std::size_t>(tgt[r])];
  }
  const T scale = reduction == Reduction::kMean ? T(1) / T(m) : T(1);
  Tensor<T> out = tape.MakeOutput({1}, {&logits});
  out.mutable_data()[0] = total * scale;
  CheckFinite<T>("ce_loss", out.data());
  tape.Record("ce_loss", {&logits}, out,
              [logits, out, tgt = std::move(tgt), logp = std::move(logp), m, v, scale]() {
    if (!logits.requires_grad()) return;
    T* g = logits.node()->EnsureGrad();
    const T up = out.grad()[0] * scale;
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t j = 0; j < v; ++j) g[r * v + j] += up * std::exp(logp[r * v + j]);
      g[r * v + static_cast<std::size_t>(tgt[r])] -= up;
    }
  });
  return out;
}

template <typename T>
Tensor<T> KdLoss(Tape<T>& tape, const Tensor<T>& teacher_logits,
                 const Tensor<T>& student_logits, std::span<const std::uint8_t> mask,
                 const DistillConfig& config) {
  ValidateDistillConfig(config);
  Require(config.kind != DistillKind::kSeqKdCe, ErrorCode::kInvalidArgument,
          "kd_loss needs a divergence kind, got seqkd_ce");
  Require(teacher_logits.shape() == student_logits.shape() && student_logits.rank() == 2,
          ErrorCode::kShapeMismatch,
          "kd_loss: teacher " + ShapeString(teacher_logits.shape()) + " vs student " +
              ShapeString(student_logits.shape()));
  const std::size_t m = student_logits.dim(0), v = student_logits.dim(1);
  Require(mask.empty() || mask.size() == m, ErrorCode::kShapeMismatch,
          "kd_loss: mask length does not match row count");
  const T tau = T(config.temperature);
  const T lambda = T(config.skew.value_or(0.0));
  std::size_t active = 0;
  for (std::size_t r = 0; r < m; ++r) active += mask.empty() || mask[r];
  // Per-row gradient w.r.t. the student logits, filled during forward.
  std::vector<T> grad(m * v, T(0));
  std::vector<T> scaled(v), p(v), q(v), gq(v);
  T total = 0;
  for (std::size_t r = 0; r < m; ++r) {
    if (!(mask.empty() || mask[r])) continue;
    for (std::size_t j = 0; j < v; ++j) scaled[j] = teacher_logits.data()[r * v + j] / tau;
    kernels::SoftmaxRow(scaled.data(), p.data(), v);
    for (std::size_t j = 0; j < v; ++j) scaled[j] = student_logits.data()[r * v + j] / tau;
    kernels::SoftmaxRow(scaled.data(), q.data(), v);
    total += RowDivergence(p.data(), q.data(), v, config.kind, lambda, gq.data());
    T dot = 0;
    for (std::size_t j = 0; j < v; ++j) dot += q[j] * gq[j];
    for (std::size_t j = 0; j < v; ++j) grad[r * v + j] = q[j] * (gq[j] - dot);
  }
  const T norm = active > 0 ? T(1) / T(active) : T(0);
  Tensor<T> out = tape.MakeOutput({1}, {&student_logits});
  out.mutable_data()[0] = tau * tau * total * norm;
  CheckFinite<T>("kd_loss", out.data());
  // d/ds = tau^2 * (1 / tau) * softmax Jacobian; the 1/tau comes from s / tau.
  const T factor = tau * norm;
  tape.Record("kd_loss", {&student_logits}, out,
              [student_logits, out, grad = std::move(grad), factor]() {
    if (!student_logits.requires_grad()) return;
    T* g = student_logits.node()->EnsureGrad();
    const T up = out.grad()[0] * factor;
    for (std::size_t i = 0; i < grad.size(); ++i) g[i] += up * grad[i];
  });
  return out;
}

template <typename T>
Tensor<T> CombinedLoss(Tape<T>& tape, const Tensor<T>& ce, const Tensor<T>& kd,
                       double alpha) {
  Require(alpha >= 0.0 && alpha <= 1.0, ErrorCode::kInvalidArgument,
          "mix coefficient must lie in [0, 1]");
  return ops::Add(tape, ops::Scale(tape, ce, T(alpha)), ops::Scale(tape, kd, T(1.0 - alpha)));
}

double CombinedLoss(double ce, double kd, double alpha) {
  Require(alpha >= 0.0 && alpha <= 1.0, ErrorCode::kInvalidArgument,
          "mix coefficient must lie in [0, 1]");
  return alpha * ce + (1.0 - alpha) * kd;
}

template Tensor<float> CeLoss(Tape<float>&, const Tensor<float>&, std::span<const int>,
                              Reduction);
template Tensor<double> CeLoss(Tape<double>&, const Tensor<double>&, std::span<const int>,
                               Reduction);
template Tensor<float> KdLoss(Tape<float>&, const Tensor<float>&, const Tensor<float>&,
                              std::span<const std::uint8_t>, const DistillConfig&);
template Tensor<double> KdLoss(Tape<double>&, const Tensor<double>&, const Tensor<double>&,
                               std::span<const std::uint8_t>, const DistillConfig&);
template Tensor<float> CombinedLoss(Tape<float>&, const Tensor<float>&, const Tensor<float>&,
                                    double);
template Tensor<double> CombinedLoss(Tape<double>&, const Tensor<double>&,
                                     const Tensor<double>&, double);

namespace {

std::vector<PromptCompletion> Select(const std::vector<PromptCompletion>& corpus,
                                     std::span<const std::size_t> indices) {
  std::vector<PromptCompletion> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(corpus.at(i));
  return out;
}

}  // namespace

Objective MakeCrossEntropyObjective(std::vector<PromptCompletion> corpus) {
  auto data = std::make_shared<const std::vector<PromptCompletion>>(std::move(corpus));
  return [data](Tape<float>& tape, const LanguageModel& model,
                std::span<const std::size_t> indices) {
    const std::vector<PromptCompletion> batch = Select(*data, indices);
    TeacherForcedBatch tf = BuildTeacherForced(batch, model.config());
    Tensor<float> logits = model.Forward(tape, tf.packed);
    Tensor<float> rows = ops::EmbedGather(tape, logits, tf.target_rows);
    return CeLoss(tape, rows, tf.targets, Reduction::kMean);
  };
}

Objective MakeDistillObjective(std::vector<PromptCompletion> corpus,
                               std::vector<std::vector<float>> teacher_logits,
                               const DistillConfig& config) {
  ValidateDistillConfig(config);
  Require(config.kind == DistillKind::kSeqKdCe || teacher_logits.size() == corpus.size(),
          ErrorCode::kInvalidArgument, "teacher logits must cover the whole corpus");
  auto data = std::make_shared<const std::vector<PromptCompletion>>(std::move(corpus));
  auto cache =
      std::make_shared<const std::vector<std::vector<float>>>(std::move(teacher_logits));
  return [data, cache, config](Tape<float>& tape, const LanguageModel& model,
                               std::span<const std::size_t> indices) {
    const std::vector<PromptCompletion> batch = Select(*data, indices);
    TeacherForcedBatch tf = BuildTeacherForced(batch, model.config());
    Tensor<float> logits = model.Forward(tape, tf.packed);
    Tensor<float> rows = ops::EmbedGather(tape, logits, tf.target_rows);
    Tensor<float> ce = CeLoss(tape, rows, tf.targets, Reduction::kMean);
    if (config.kind == DistillKind::kSeqKdCe) return ce;
    const std::size_t v = model.config().vocab_size;
    std::vector<float> teacher;
    teacher.reserve(tf.targets.size() * v);
    for (std::size_t i : indices) {
      const std::vector<float>& block = cache->at(i);
      Require(block.size() == data->at(i).completion.ids.size() * v, ErrorCode::kShapeMismatch,
              "cached teacher logits do not match the completion length");
      teacher.insert(teacher.end(), block.begin(), block.end());
    }
    Tensor<float> t = Tensor<float>::FromData({tf.targets.size(), v}, std::move(teacher));
    Tensor<float> kd = KdLoss(tape, t, rows, {}, config);
    return CombinedLoss(tape, ce, kd, config.mix);
  };
}

}  // namespace wd
