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


#ifndef WARMDISTILL_TASKS_H_
#define WARMDISTILL_TASKS_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "warmdistill/lm.h"

namespace wd {

// Synthetic task families.
//
// instruction: "<op>:<words>>" where op is = (copy), ~ (reverse) or ^
// (uppercase) and words are single letters a..p; the reference is the
// transformed word list. Scored with Rouge-L over whitespace words.
//
// math: "<a><op><b>:" with two-digit operands and op in {+, *}; the reference
// works on the last digits, e.g. "47*85:" -> "7*5=35#5". The answer follows
// the '#' delimiter and is scored by exact match.
enum class Task { kInstruction, kMath };

const char* TaskName(Task task);
Task ParseTask(std::string_view name);

inline constexpr char kAnswerDelimiter = '#';

struct Example {
  std::string id;
  std::string prompt;
  std::string reference;
};

struct CorpusSplits {
  std::vector<Example> train;
  std::vector<Example> valid;
  std::vector<Example> test;
};

// Reference answer for a prompt of the given task. Throws kInvalidArgument on
// malformed prompts.
std::string SolvePrompt(Task task, std::string_view prompt);

// `size` distinct prompts split 80/10/10 (floors, remainder to train).
// Deterministic in `seed`. Requires size >= 30.
CorpusSplits GenerateCorpus(Task task, std::size_t size, std::uint64_t seed);

void WriteExamples(const std::string& path, const std::vector<Example>& examples);
std::vector<Example> ReadExamples(const std::string& path);

std::vector<PromptCompletion> ToPromptCompletions(const std::vector<Example>& examples);

// Task reward of `candidate` against `reference`: Rouge-L F for instruction,
// exact-match accuracy for math.
double TaskReward(Task task, std::string_view candidate, std::string_view reference);

}  // namespace wd

#endif  // WARMDISTILL_TASKS_H_
