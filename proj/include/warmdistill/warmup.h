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


#ifndef WARMDISTILL_WARMUP_H_
#define WARMDISTILL_WARMUP_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "warmdistill/lm.h"
#include "warmdistill/metrics.h"
#include "warmdistill/tasks.h"

namespace wd {

// Token-level detection rules.
//   prob_margin:  q_i - p_i > eta, eta in (0, 1].
//   teacher_rank: rank of y_i under the teacher > eta.
//   rank_margin:  teacher rank - student rank of y_i > eta.
enum class DetectMode { kProbMargin, kTeacherRank, kRankMargin };

const char* DetectModeName(DetectMode mode);
DetectMode ParseDetectMode(std::string_view name);

struct WarmupConfig {
  double eta = 4.0;
  DetectMode mode = DetectMode::kTeacherRank;
  std::size_t samples_per_prompt = 8;
  // Student proposals; max_new also bounds repaired sequences.
  SamplingConfig sampling;
  // Teacher continuation after the detected token.
  ContinueConfig continuation;
  std::uint64_t seed = 0;
};

void ValidateWarmupConfig(const WarmupConfig& config);

struct ProbeTrace {
  TokenSeq prompt;
  TokenSeq y;
  std::vector<double> p_probs;
  std::vector<double> q_probs;
  std::vector<double> margins;
  std::vector<std::size_t> teacher_ranks;
  std::vector<std::size_t> student_ranks;
};

// 1-based rank of `token` in `probs`; ties go to the lower id.
std::size_t TokenRank(std::span<const double> probs, std::size_t token);

ProbeTrace Probe(const LanguageModel& teacher, const LanguageModel& student,
                 const TokenSeq& prompt, const TokenSeq& y);

struct MismatchReport {
  std::optional<std::size_t> detect_index;
  DetectMode mode = DetectMode::kTeacherRank;
  double eta = 4.0;
};

bool Violates(const ProbeTrace& trace, std::size_t i, const WarmupConfig& config);
MismatchReport Detect(const ProbeTrace& trace, const WarmupConfig& config);
// Tokens of the trace that satisfy the detection rule.
std::size_t PassingCount(const ProbeTrace& trace, const WarmupConfig& config);

// y[0..detect_index) followed by the teacher's continuation.
TokenSeq Refine(const LanguageModel& teacher, const TokenSeq& prompt, const TokenSeq& y,
                const MismatchReport& report, const WarmupConfig& config);

struct RewardDecision {
  bool accept = false;
  double reward_plus = 0.0;
  double reward_minus = 0.0;
};

// Accepts iff reward(y_plus) > reward(y_minus) strictly.
RewardDecision RewardAccept(Task task, const TokenSeq& y_plus, const TokenSeq& y_minus,
                            std::string_view reference);

struct PairMeta {
  std::size_t detect_index = 0;
  DetectMode mode = DetectMode::kTeacherRank;
  double eta = 4.0;
  double reward_plus = 0.0;
  double reward_minus = 0.0;
};

struct PreferencePair {
  TokenSeq prompt;
  TokenSeq chosen;
  TokenSeq rejected;
  PairMeta meta;
};

struct PromptLog {
  std::string id;
  std::size_t samples = 0;
  std::size_t detected = 0;
  std::size_t accepted = 0;
};

struct WarmupResult {
  std::vector<PreferencePair> pairs;
  WarmupStats stats;
  std::vector<PromptLog> prompts;
};

// For each example: N student samples, then probe, detect, refine and the
// reward filter. Identical (chosen, rejected) pairs within a prompt are kept
// once. Sample streams are keyed by the example index.
WarmupResult BuildPairs(const LanguageModel& teacher, const LanguageModel& student,
                        std::span<const Example> corpus, Task task,
                        const WarmupConfig& config);

struct SkdConfig {
  std::size_t rank_cap = 4;
  SamplingConfig proposal{1.0, 1.0, true, 32};
  std::uint64_t seed = 0;
};

struct SkdOutput {
  TokenSeq sequence;
  std::size_t replacements = 0;
};

// Student proposes each token; a proposal ranked worse than rank_cap by the
// teacher is replaced with the teacher's greedy token.
SkdOutput SkdRefine(const LanguageModel& teacher, const LanguageModel& student,
                    const TokenSeq& prompt, const SkdConfig& config);

// JSON lines {prompt, chosen, rejected, meta}. meta also records whether each
// side was EOS-terminated so token sequences round-trip.
void WritePairs(const std::string& path, std::span<const PreferencePair> pairs);
std::vector<PreferencePair> ReadPairs(const std::string& path);

}  // namespace wd

#endif  // WARMDISTILL_WARMUP_H_
