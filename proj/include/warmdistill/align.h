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


#ifndef WARMDISTILL_ALIGN_H_
#define WARMDISTILL_ALIGN_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "warmdistill/lm.h"
#include "warmdistill/warmup.h"

namespace wd {

enum class AlignVariant { kDpo, kHinge, kSimpo };

const char* AlignVariantName(AlignVariant variant);
AlignVariant ParseAlignVariant(std::string_view name);

struct AlignConfig {
  AlignVariant variant = AlignVariant::kDpo;
  double beta = 0.1;
  double delta = 1.0;  // hinge margin
  double gamma = 0.5;  // simpo target margin
  std::size_t epochs = 1;
  double learning_rate = 3e-6;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
};

void ValidateAlignConfig(const AlignConfig& config);

struct SequenceScore {
  double total = 0.0;
  double mean = 0.0;
};

SequenceScore SequenceLogprob(const LanguageModel& model, const TokenSeq& prompt,
                              const TokenSeq& y);

// sigma(reward_plus - reward_minus).
double BtPreference(double reward_plus, double reward_minus);

// Reference-side log-probabilities of one pair; unused by simpo.
struct ReferenceScores {
  double chosen = 0.0;
  double rejected = 0.0;
};

ReferenceScores ScoreReference(const LanguageModel& reference, const PreferencePair& pair);

// Inner bracket of the loss: beta times the chosen-minus-rejected log-ratio
// gap for dpo/hinge, beta times the mean log-prob gap for simpo (gamma not
// subtracted).
double PreferenceMargin(const LanguageModel& policy, const LanguageModel& reference,
                        const PreferencePair& pair, const AlignConfig& config);

// Scalar loss of a given inner bracket value.
double PreferenceLossFromMargin(double margin, const AlignConfig& config);

double PreferenceLoss(const LanguageModel& policy, const LanguageModel& reference,
                      const PreferencePair& pair, const AlignConfig& config);

// Mean loss over `pairs` on the tape; gradients reach only `policy`.
// `reference` holds one entry per pair (ignored by simpo).
template <typename T>
Tensor<T> PreferenceLossTaped(Tape<T>& tape, const BasicLanguageModel<T>& policy,
                              std::span<const PreferencePair> pairs,
                              std::span<const ReferenceScores> reference,
                              const AlignConfig& config);

struct AlignReport {
  AlignVariant variant = AlignVariant::kDpo;
  double beta = 0.1;
  std::size_t steps = 0;
  double final_loss = 0.0;
  double implicit_accuracy = 0.0;
  std::vector<double> loss_curve;
};

std::string AlignReportToJson(const AlignReport& report);

struct AlignResult {
  LanguageModel model;
  AlignReport report;
};

// Trains a copy of `student` against a frozen copy of itself. The result is
// tagged kStudentWarmup; implicit accuracy is the fraction of pairs whose
// inner bracket is positive after training.
AlignResult WarmupAlign(const LanguageModel& student, std::span<const PreferencePair> pairs,
                        const AlignConfig& config);

}  // namespace wd

#endif  // WARMDISTILL_ALIGN_H_
