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


#ifndef WARMDISTILL_METRICS_H_
#define WARMDISTILL_METRICS_H_

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "warmdistill/lm.h"

namespace wd {

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
};

std::size_t LcsLength(std::span<const std::string> a, std::span<const std::string> b);

// LCS-based precision, recall and F1. Empty inputs score 0.
RougeScore RougeL(std::span<const std::string> candidate,
                  std::span<const std::string> reference);
// Splits both strings on whitespace first.
RougeScore RougeL(std::string_view candidate, std::string_view reference);

std::vector<std::string> SplitWords(std::string_view text);

// Trims and collapses internal whitespace runs to a single space.
std::string NormalizeAnswer(std::string_view answer);

// Text after the last answer delimiter, or nullopt when there is none.
std::optional<std::string> ExtractAnswer(std::string_view text);

struct MatchResult {
  int score = 0;
  bool missing_delimiter = false;
};

// 1 iff the normalized answers are equal.
int AnswersMatch(std::string_view candidate, std::string_view reference);
// Extracts both answers first. A candidate without the delimiter scores 0 and
// sets the flag; a reference without one is kInvalidArgument.
MatchResult ExactMatch(std::string_view candidate, std::string_view reference);

// One probed sequence: its length, how many tokens pass the detection rule,
// and, when a refinement was scored, whether it beat the original.
struct SequenceOutcome {
  std::size_t length = 0;
  std::size_t passing = 0;
  std::optional<bool> improved;
};

struct WarmupStats {
  double r = 0.0;
  double all = 0.0;
  double len = 0.0;
  double good = 0.0;
  std::size_t sequences = 0;
  std::size_t refined = 0;
  std::size_t improved = 0;
};

// Good is 0 when nothing was refined; `refined` carries the denominator.
WarmupStats ComputeWarmupStats(std::span<const SequenceOutcome> outcomes);

std::string WarmupStatsToJson(const WarmupStats& stats);
WarmupStats WarmupStatsFromJson(std::string_view text);

inline constexpr std::size_t kHistogramBins = 50;
// Upper edge of the non-target std axis; the std of values in [0, 1] summing
// to at most 1 never exceeds 0.5.
inline constexpr double kStdAxisMax = 0.5;

struct DistHistogram {
  std::vector<std::size_t> target_prob_counts;
  std::vector<std::size_t> nontarget_std_counts;
  double target_prob_mean = 0.0;
  double nontarget_std_mean = 0.0;
  std::size_t positions = 0;
};

double NonTargetStd(std::span<const double> probs, std::size_t target);

// Histogram over rows of `probs` ([M, V] row-major) with one target per row.
DistHistogram HistogramFromRows(std::span<const double> probs, std::size_t vocab,
                                std::span<const int> targets);

// Teacher-forced over every reference position of `corpus`.
DistHistogram DistHistograms(const LanguageModel& model,
                             std::span<const PromptCompletion> corpus);

// Columns: series, bin_left, bin_right, count.
std::string HistogramCsv(const DistHistogram& hist);
std::string HistogramSvg(std::span<const DistHistogram> hists,
                         std::span<const std::string> labels);

struct MetricRow {
  std::string role;
  std::string task;
  std::string metric;
  double value = 0.0;
};

// Header "role,task,metric,value"; values with fixed 6 decimals.
std::string MetricsCsv(std::span<const MetricRow> rows);
std::vector<MetricRow> ParseMetricsCsv(std::string_view text);

}  // namespace wd

#endif  // WARMDISTILL_METRICS_H_
