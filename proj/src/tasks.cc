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

#include "warmdistill/tasks.h"

#include <algorithm>
#include <cstdio>
#include <set>

#include "json.hpp"
#include "warmdistill/error.h"
#include "warmdistill/io.h"
#include "warmdistill/metrics.h"
#include "warmdistill/rng.h"
#include "warmdistill/vocab.h"

namespace wd {

namespace {

constexpr std::size_t kMinWords = 3;
constexpr std::size_t kMaxWords = 6;
constexpr char kCopy = '=';
constexpr char kReverse = '~';
constexpr char kUpper = '^';
constexpr char kOps[] = {kCopy, kReverse, kUpper};

bool IsWordLetter(char c) { return c >= 'a' && c <= 'p'; }

std::string SolveInstruction(std::string_view prompt) {
  Require(prompt.size() >= 4 && prompt[1] == ':' && prompt.back() == '>',
          ErrorCode::kInvalidArgument,
          "malformed instruction prompt '" + std::string(prompt) + "'");
  const char op = prompt[0];
  std::vector<std::string> words = SplitWords(prompt.substr(2, prompt.size() - 3));
  Require(!words.empty(), ErrorCode::kInvalidArgument, "instruction prompt has no words");
  for (const std::string& w : words) {
    Require(w.size() == 1 && IsWordLetter(w[0]), ErrorCode::kInvalidArgument,
            "instruction words must be single letters a..p");
  }
  switch (op) {
    case kCopy:
      break;
    case kReverse:
      std::reverse(words.begin(), words.end());
      break;
    case kUpper:
      for (std::string& w : words) w[0] = static_cast<char>(w[0] - 'a' + 'A');
      break;
    default:
      Fail(ErrorCode::kInvalidArgument, std::string("unknown instruction op '") + op + "'");
  }
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

std::string SolveMath(std::string_view prompt) {
  Require(prompt.size() == 6 && prompt[5] == ':' && (prompt[2] == '+' || prompt[2] == '*'),
          ErrorCode::kInvalidArgument, "malformed math prompt '" + std::string(prompt) + "'");
  for (std::size_t i : {0, 1, 3, 4}) {
    Require(prompt[i] >= '0' && prompt[i] <= '9', ErrorCode::kInvalidArgument,
            "math operands must be two-digit numbers");
  }
  const int a = prompt[1] - '0';
  const int b = prompt[4] - '0';
  const char op = prompt[2];
  const int value = op == '+' ? a + b : a * b;
  return std::to_string(a) + op + std::to_string(b) + '=' + std::to_string(value) +
         kAnswerDelimiter + std::to_string(value % 10);
}

std::string RandomPrompt(Task task, Rng& rng) {
  if (task == Task::kMath) {
    const int a = 10 + static_cast<int>(UniformIndex(rng, 90));
    const char op = UniformIndex(rng, 2) == 0 ? '+' : '*';
    const int b = 10 + static_cast<int>(UniformIndex(rng, 90));
    return std::to_string(a) + op + std::to_string(b) + ':';
  }
  std::string out(1, kOps[UniformIndex(rng, 3)]);
  out += ':';
  const std::size_t n = kMinWords + UniformIndex(rng, kMaxWords - kMinWords + 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += static_cast<char>('a' + UniformIndex(rng, 16));
  }
  out += '>';
  return out;
}

}  // namespace

const char* TaskName(Task task) {
  return task == Task::kMath ? "math" : "instruction";
}

Task ParseTask(std::string_view name) {
  if (name == "instruction") return Task::kInstruction;
  if (name == "math") return Task::kMath;
  Fail(ErrorCode::kInvalidArgument, "unknown task '" + std::string(name) + "'");
}

std::string SolvePrompt(Task task, std::string_view prompt) {
  return task == Task::kMath ? SolveMath(prompt) : SolveInstruction(prompt);
}

CorpusSplits GenerateCorpus(Task task, std::size_t size, std::uint64_t seed) {
  Require(size >= 30, ErrorCode::kInvalidArgument, "corpus size must be >= 30");
  Rng rng(DeriveSeed(seed, task == Task::kMath ? 0x6d617468 : 0x696e7374));
  std::set<std::string> seen;
  std::vector<std::string> prompts;
  std::size_t attempts = 0;
  while (prompts.size() < size) {
    Require(++attempts <= size * 100, ErrorCode::kInvalidArgument,
            "cannot draw " + std::to_string(size) + " distinct prompts");
    std::string p = RandomPrompt(task, rng);
    if (seen.insert(p).second) prompts.push_back(std::move(p));
  }
  const std::size_t n_valid = size / 10;
  const std::size_t n_test = size / 10;
  const std::size_t n_train = size - n_valid - n_test;
  CorpusSplits splits;
  auto emit = [&](std::vector<Example>& out, const char* split, std::size_t begin,
                  std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      char id[32];
      std::snprintf(id, sizeof(id), "%s-%05zu", split, i - begin);
      out.push_back({id, prompts[i], SolvePrompt(task, prompts[i])});
    }
  };
  emit(splits.train, "train", 0, n_train);
  emit(splits.valid, "valid", n_train, n_train + n_valid);
  emit(splits.test, "test", n_train + n_valid, size);
  return splits;
}

void WriteExamples(const std::string& path, const std::vector<Example>& examples) {
  std::string out;
  for (const Example& e : examples) {
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["prompt"] = e.prompt;
    j["reference"] = e.reference;
    out += j.dump();
    out += '\n';
  }
  WriteTextFile(path, out);
}

std::vector<Example> ReadExamples(const std::string& path) {
  std::vector<Example> out;
  std::size_t line_no = 0;
  for (const std::string& line : ReadLines(path)) {
    ++line_no;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      out.push_back({j.at("id").get<std::string>(), j.at("prompt").get<std::string>(),
                     j.at("reference").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      Fail(ErrorCode::kParse, path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<PromptCompletion> ToPromptCompletions(const std::vector<Example>& examples) {
  std::vector<PromptCompletion> out;
  out.reserve(examples.size());
  for (const Example& e : examples) {
    out.push_back({EncodePrompt(e.prompt), EncodeCompletion(e.reference)});
  }
  return out;
}

double TaskReward(Task task, std::string_view candidate, std::string_view reference) {
  if (task == Task::kMath) return ExactMatch(candidate, reference).score;
  return RougeL(candidate, reference).f;
}

}  // namespace wd
