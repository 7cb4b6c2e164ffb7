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

#include "warmdistill/warmup.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>

#include "json.hpp"
#include "warmdistill/error.h"
#include "warmdistill/io.h"
#include "warmdistill/rng.h"
#include "warmdistill/vocab.h"

namespace wd {

const char* DetectModeName(DetectMode mode) {
  switch (mode) {
    case DetectMode::kProbMargin: return "prob_margin";
    case DetectMode::kTeacherRank: return "teacher_rank";
    case DetectMode::kRankMargin: return "rank_margin";
  }
  return "teacher_rank";
}

DetectMode ParseDetectMode(std::string_view name) {
  for (DetectMode m :
       {DetectMode::kProbMargin, DetectMode::kTeacherRank, DetectMode::kRankMargin}) {
    if (name == DetectModeName(m)) return m;
  }
  Fail(ErrorCode::kInvalidArgument, "unknown detection mode '" + std::string(name) + "'");
}

void ValidateWarmupConfig(const WarmupConfig& c) {
  Require(c.eta > 0.0 && std::isfinite(c.eta), ErrorCode::kInvalidArgument,
          "eta must be a finite value > 0");
  if (c.mode == DetectMode::kProbMargin) {
    Require(c.eta <= 1.0, ErrorCode::kInvalidArgument,
            "prob_margin eta must lie in (0, 1], got " + std::to_string(c.eta));
  }
  Require(c.samples_per_prompt >= 1, ErrorCode::kInvalidArgument,
          "samples per prompt must be >= 1");
  ValidateSampling(c.sampling);
}

std::size_t TokenRank(std::span<const double> probs, std::size_t token) {
  Require(token < probs.size(), ErrorCode::kInvalidArgument, "rank: token out of range");
  const double pt = probs[token];
  std::size_t rank = 1;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (probs[j] > pt || (probs[j] == pt && j < token)) ++rank;
  }
  return rank;
}

namespace {

std::vector<double> RowProbs(const float* logits, std::size_t v) {
  const double mx = *std::max_element(logits, logits + v);
  std::vector<double> p(v);
  double z = 0.0;
  for (std::size_t j = 0; j < v; ++j) {
    p[j] = std::exp(static_cast<double>(logits[j]) - mx);
    z += p[j];
  }
  for (double& x : p) x /= z;
  return p;
}

}  // namespace

ProbeTrace Probe(const LanguageModel& teacher, const LanguageModel& student,
                 const TokenSeq& prompt, const TokenSeq& y) {
  Require(!y.empty(), ErrorCode::kInvalidArgument, "probe: empty sequence");
  Require(teacher.config().vocab_size == student.config().vocab_size,
          ErrorCode::kInvalidArgument, "probe: teacher and student vocabularies differ");
  const std::vector<PromptCompletion> one{{prompt, y}};
  const std::vector<float> t_logits = TeacherForcedLogits(teacher, one)[0];
  const std::vector<float> s_logits = TeacherForcedLogits(student, one)[0];
  const std::size_t v = teacher.config().vocab_size;
  ProbeTrace trace;
  trace.prompt = prompt;
  trace.y = y;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const std::size_t tok = static_cast<std::size_t>(y.ids[i]);
    const std::vector<double> p = RowProbs(t_logits.data() + i * v, v);
    const std::vector<double> q = RowProbs(s_logits.data() + i * v, v);
    trace.p_probs.push_back(p[tok]);
    trace.q_probs.push_back(q[tok]);
    trace.margins.push_back(q[tok] - p[tok]);
    trace.teacher_ranks.push_back(TokenRank(p, tok));
    trace.student_ranks.push_back(TokenRank(q, tok));
  }
  return trace;
}

bool Violates(const ProbeTrace& trace, std::size_t i, const WarmupConfig& config) {
  switch (config.mode) {
    case DetectMode::kProbMargin:
      return trace.margins.at(i) > config.eta;
    case DetectMode::kTeacherRank:
      return static_cast<double>(trace.teacher_ranks.at(i)) > config.eta;
    case DetectMode::kRankMargin:
      return static_cast<double>(trace.teacher_ranks.at(i)) -
                 static_cast<double>(trace.student_ranks.at(i)) >
             config.eta;
  }
  return false;
}

MismatchReport Detect(const ProbeTrace& trace, const WarmupConfig& config) {
  ValidateWarmupConfig(config);
  const std::size_t m = trace.y.size();
  Require(trace.margins.size() == m && trace.teacher_ranks.size() == m &&
              trace.student_ranks.size() == m && trace.p_probs.size() == m &&
              trace.q_probs.size() == m,
          ErrorCode::kInvalidArgument, "detect: trace fields differ in length");
  MismatchReport report;
  report.mode = config.mode;
  report.eta = config.eta;
  for (std::size_t i = 0; i < m; ++i) {
    if (Violates(trace, i, config)) {
      report.detect_index = i;
      break;
    }
  }
  return report;
}

std::size_t PassingCount(const ProbeTrace& trace, const WarmupConfig& config) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < trace.y.size(); ++i) n += !Violates(trace, i, config);
  return n;
}

TokenSeq Refine(const LanguageModel& teacher, const TokenSeq& prompt, const TokenSeq& y,
                const MismatchReport& report, const WarmupConfig& config) {
  Require(report.detect_index.has_value(), ErrorCode::kInvalidArgument,
          "refine: report has no detect index");
  const std::size_t d = *report.detect_index;
  Require(d < y.size(), ErrorCode::kInvalidArgument, "refine: detect index past the sequence");
  TokenSeq prefix;
  prefix.ids.assign(y.ids.begin(), y.ids.begin() + static_cast<std::ptrdiff_t>(d));
  const std::size_t budget = config.sampling.max_new - d;
  return ContinueFrom(teacher, prompt, prefix, budget, config.continuation).sequence;
}

RewardDecision RewardAccept(Task task, const TokenSeq& y_plus, const TokenSeq& y_minus,
                            std::string_view reference) {
  Require(!reference.empty(), ErrorCode::kInvalidArgument, "reward: missing reference");
  RewardDecision d;
  d.reward_plus = TaskReward(task, Render(y_plus), reference);
  d.reward_minus = TaskReward(task, Render(y_minus), reference);
  d.accept = d.reward_plus > d.reward_minus;
  return d;
}

WarmupResult BuildPairs(const LanguageModel& teacher, const LanguageModel& student,
                        std::span<const Example> corpus, Task task,
                        const WarmupConfig& config) {
  ValidateWarmupConfig(config);
  Require(!corpus.empty(), ErrorCode::kInvalidArgument, "warmup: empty corpus");
  WarmupResult result;
  std::vector<SequenceOutcome> outcomes;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const Example& ex = corpus[i];
    const TokenSeq prompt = EncodePrompt(ex.prompt);
    const std::uint64_t stream = DeriveSeed(config.seed, i);
    const std::vector<TokenSeq> samples =
        Sample(student, prompt, config.samples_per_prompt, config.sampling, stream);
    PromptLog log{ex.id, samples.size(), 0, 0};
    std::set<std::pair<std::vector<int>, std::vector<int>>> seen;
    for (std::size_t j = 0; j < samples.size(); ++j) {
      const TokenSeq& y = samples[j];
      const ProbeTrace trace = Probe(teacher, student, prompt, y);
      const MismatchReport report = Detect(trace, config);
      SequenceOutcome outcome{y.size(), PassingCount(trace, config), std::nullopt};
      if (report.detect_index) {
        ++log.detected;
        WarmupConfig local = config;
        local.continuation.seed = DeriveSeed(stream, j + 1);
        const TokenSeq y_plus = Refine(teacher, prompt, y, report, local);
        const RewardDecision reward = RewardAccept(task, y_plus, y, ex.reference);
        outcome.improved = reward.accept;
        if (reward.accept && seen.emplace(y_plus.ids, y.ids).second) {
          ++log.accepted;
          result.pairs.push_back({prompt, y_plus, y,
                                  {*report.detect_index, config.mode, config.eta,
                                   reward.reward_plus, reward.reward_minus}});
        }
      }
      outcomes.push_back(outcome);
    }
    result.prompts.push_back(std::move(log));
  }
  result.stats = ComputeWarmupStats(outcomes);
  return result;
}

SkdOutput SkdRefine(const LanguageModel& teacher, const LanguageModel& student,
                    const TokenSeq& prompt, const SkdConfig& config) {
  Require(config.rank_cap >= 1, ErrorCode::kInvalidArgument, "skd: rank cap must be >= 1");
  ValidateSampling(config.proposal);
  const std::size_t max_new = config.proposal.max_new;
  for (const LanguageModel* m : {&teacher, &student}) {
    Require(prompt.size() + max_new <= m->config().context_len, ErrorCode::kContextOverflow,
            "skd: prompt of " + std::to_string(prompt.size()) + " tokens plus " +
                std::to_string(max_new) + " new tokens exceeds the context");
  }
  IncrementalDecoder t_dec(teacher), s_dec(student);
  t_dec.Push(kBosId);
  s_dec.Push(kBosId);
  for (int id : prompt.ids) {
    t_dec.Push(id);
    s_dec.Push(id);
  }
  SamplingConfig greedy = config.proposal;
  greedy.greedy = true;
  Rng rng(DeriveSeed(config.seed, 0));
  SkdOutput out;
  const std::size_t v = teacher.config().vocab_size;
  while (out.sequence.size() < max_new) {
    int token = ChooseToken(s_dec.logits(), config.proposal, rng);
    std::vector<double> p = RowProbs(t_dec.logits().data(), v);
    if (TokenRank(p, static_cast<std::size_t>(token)) > config.rank_cap) {
      token = ChooseToken(t_dec.logits(), greedy, rng);
      ++out.replacements;
    }
    out.sequence.ids.push_back(token);
    if (token == kEosId || out.sequence.size() == max_new) break;
    t_dec.Push(token);
    s_dec.Push(token);
  }
  return out;
}

void WritePairs(const std::string& path, std::span<const PreferencePair> pairs) {
  std::string out;
  for (const PreferencePair& p : pairs) {
    nlohmann::ordered_json j;
    j["prompt"] = Render(p.prompt);
    j["chosen"] = Render(p.chosen);
    j["rejected"] = Render(p.rejected);
    nlohmann::ordered_json meta;
    meta["detect_index"] = p.meta.detect_index;
    meta["mode"] = DetectModeName(p.meta.mode);
    meta["eta"] = p.meta.eta;
    meta["reward_plus"] = p.meta.reward_plus;
    meta["reward_minus"] = p.meta.reward_minus;
    meta["chosen_eos"] = p.chosen.EndsWithEos();
    meta["rejected_eos"] = p.rejected.EndsWithEos();
    j["meta"] = meta;
    out += j.dump();
    out += '\n';
  }
  WriteTextFile(path, out);
}

std::vector<PreferencePair> ReadPairs(const std::string& path) {
  std::vector<PreferencePair> pairs;
  std::size_t line_no = 0;
  for (const std::string& line : ReadLines(path)) {
    ++line_no;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      const nlohmann::json& meta = j.at("meta");
      PreferencePair p;
      p.prompt = EncodePrompt(j.at("prompt").get<std::string>());
      p.chosen = meta.value("chosen_eos", true)
                     ? EncodeCompletion(j.at("chosen").get<std::string>())
                     : EncodePrompt(j.at("chosen").get<std::string>());
      p.rejected = meta.value("rejected_eos", true)
                       ? EncodeCompletion(j.at("rejected").get<std::string>())
                       : EncodePrompt(j.at("rejected").get<std::string>());
      p.meta.detect_index = meta.at("detect_index").get<std::size_t>();
      p.meta.mode = ParseDetectMode(meta.at("mode").get<std::string>());
      p.meta.eta = meta.at("eta").get<double>();
      p.meta.reward_plus = meta.at("reward_plus").get<double>();
      p.meta.reward_minus = meta.at("reward_minus").get<double>();
      pairs.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      Fail(ErrorCode::kParse, path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return pairs;
}

}  // namespace wd
