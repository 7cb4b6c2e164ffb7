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

#ifndef WARMDISTILL_LOSSES_H_
#define WARMDISTILL_LOSSES_H_

// Supervised and distribution-matching objectives.
//
// Divergences are proper KL-family distances D(p || q) between a teacher row
// p and a student row q, so they vanish when the rows agree. Probabilities
// are clamped below at kProbFloor before every logarithm.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "warmdistill/lm.h"
#include "warmdistill/tensor.h"

namespace wd {

inline constexpr double kProbFloor = 1e-12;

enum class DistillKind { kSeqKdCe, kFkl, kRkl, kTvd, kJs, kSkewFkl, kAkl };

const char* DistillKindName(DistillKind kind);
DistillKind ParseDistillKind(std::string_view name);

struct DistillConfig {
  DistillKind kind = DistillKind::kFkl;
  double temperature = 2.0;
  // Skew coefficient lambda; set iff kind == kSkewFkl.
  std::optional<double> skew;
  // Weight of the cross-entropy term in mix * ce + (1 - mix) * kd.
  double mix = 0.5;
};

// Defaults for `kind`, with lambda = 0.1 for skew_fkl.
DistillConfig MakeDistillConfig(DistillKind kind);
void ValidateDistillConfig(const DistillConfig& config);

struct DistPair {
  std::vector<double> p;  // teacher
  std::vector<double> q;  // student
};

// Both rows non-negative, equal length, each summing to 1 within 1e-6.
void ValidateDistPair(const DistPair& pair);

double Divergence(const DistPair& pair, const DistillConfig& config);

// Indices of the smallest set of highest-probability tokens (ties toward the
// lower id) whose mass reaches 0.5.
std::vector<std::size_t> TeacherHead(std::span<const double> p);

// Share of the total absolute disagreement that falls on the teacher head;
// 0.5 when p == q everywhere.
double AklWeight(std::span<const double> p, std::span<const double> q);

enum class Reduction { kSum, kMean };

// -sum_i log softmax(logits_i)[target_i], or its per-row mean. `logits` is
// [M, V] with one row per target.
template <typename T>
Tensor<T> CeLoss(Tape<T>& tape, const Tensor<T>& logits, std::span<const int> targets,
                 Reduction reduction = Reduction::kMean);

// tau^2 * mean over unmasked rows of D(softmax(t / tau) || softmax(s / tau)).
// Teacher logits are constants; gradients reach only the student logits. An
// empty mask selects every row.
template <typename T>
Tensor<T> KdLoss(Tape<T>& tape, const Tensor<T>& teacher_logits,
                 const Tensor<T>& student_logits, std::span<const std::uint8_t> mask,
                 const DistillConfig& config);

template <typename T>
Tensor<T> CombinedLoss(Tape<T>& tape, const Tensor<T>& ce, const Tensor<T>& kd,
                       double alpha);
double CombinedLoss(double ce, double kd, double alpha);

// Mean token cross-entropy over the completions of the batch.
Objective MakeCrossEntropyObjective(std::vector<PromptCompletion> corpus);

// mix * CE + (1 - mix) * KD against cached teacher logits (one block per
// corpus item, as returned by TeacherForcedLogits). kSeqKdCe reduces to CE.
Objective MakeDistillObjective(std::vector<PromptCompletion> corpus,
                               std::vector<std::vector<float>> teacher_logits,
                               const DistillConfig& config);

}  // namespace wd

#endif  // WARMDISTILL_LOSSES_H_
