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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "doctest.h"
#include "fixtures.h"
#include "warmdistill/error.h"
#include "warmdistill/metrics.h"
#include "warmdistill/warmup.h"

namespace wd {
namespace {

WarmupConfig Config(DetectMode mode, double eta) {
  WarmupConfig c;
  c.mode = mode;
  c.eta = eta;
  c.samples_per_prompt = 4;
  c.sampling.max_new = 20;
  c.seed = 3;
  return c;
}

bool SharesPrefix(const PreferencePair& p) {
  const std::size_t d = p.meta.detect_index;
  if (p.chosen.size() < d || p.rejected.size() < d) return false;
  return std::equal(p.chosen.ids.begin(), p.chosen.ids.begin() + d, p.rejected.ids.begin());
}

TEST_CASE("warmup: defaults") {
  WarmupConfig c;
  CHECK(c.samples_per_prompt == 8);
  CHECK(c.eta == 4.0);
  CHECK(c.mode == DetectMode::kTeacherRank);
  CHECK(c.sampling.temperature == 1.0);
  CHECK(c.sampling.top_p == 1.0);
  CHECK(c.continuation.mode == DecodeMode::kGreedy);
  for (DetectMode m : {DetectMode::kProbMargin, DetectMode::kTeacherRank, DetectMode::kRankMargin}) {
    CHECK(ParseDetectMode(DetectModeName(m)) == m);
  }
  CHECK_THROWS_AS(ValidateWarmupConfig(Config(DetectMode::kProbMargin, 2.0)), Error);
  CHECK_THROWS_AS(ValidateWarmupConfig(Config(DetectMode::kTeacherRank, 0.0)), Error);
  CHECK_NOTHROW(ValidateWarmupConfig(Config(DetectMode::kProbMargin, 0.3)));
}

TEST_CASE("warmup: token rank") {
  const std::vector<double> p{0.4, 0.3, 0.2, 0.1};
  CHECK(TokenRank(p, 2) == 3);
  CHECK(TokenRank(p, 0) == 1);
  const std::vector<double> tie{0.25, 0.25, 0.5};
  CHECK(TokenRank(tie, 0) == 2);
  CHECK(TokenRank(tie, 1) == 3);
}

TEST_CASE("warmup: detect examples") {
  ProbeTrace t;
  t.margins = {0.1, 0.5, 0.2};
  t.teacher_ranks = {1, 1, 1};
  t.student_ranks = {1, 1, 1};
  t.p_probs = {0.5, 0.1, 0.3};
  t.q_probs = {0.6, 0.6, 0.5};
  t.y.ids = {4, 5, 6};
  MismatchReport r = Detect(t, Config(DetectMode::kProbMargin, 0.3));
  REQUIRE(r.detect_index.has_value());
  CHECK(*r.detect_index == 1);
  CHECK_FALSE(Detect(t, Config(DetectMode::kProbMargin, 0.5)).detect_index.has_value());
  ProbeTrace u;
  u.teacher_ranks = {1, 2, 9, 3};
  u.student_ranks = {1, 1, 1, 1};
  u.margins = {0, 0, 0, 0};
  u.p_probs = u.q_probs = {0.1, 0.1, 0.1, 0.1};
  u.y.ids = {4, 5, 6, 7};
  r = Detect(u, Config(DetectMode::kTeacherRank, 4));
  REQUIRE(r.detect_index.has_value());
  CHECK(*r.detect_index == 2);
  CHECK(PassingCount(u, Config(DetectMode::kTeacherRank, 4)) == 3);
  CHECK(*Detect(u, Config(DetectMode::kRankMargin, 4)).detect_index == 2);
  CHECK_FALSE(Detect(u, Config(DetectMode::kTeacherRank, 9)).detect_index.has_value());
}

TEST_CASE("warmup: probe") {
  const auto& f = fixtures::InstructionModels();
  const TokenSeq prompt = EncodePrompt(f.corpus.test[0].prompt);
  SamplingConfig s;
  s.max_new = 16;
  const TokenSeq y = Sample(f.student, prompt, 1, s, 5)[0];
  const ProbeTrace self = Probe(f.teacher, f.teacher, prompt, y);
  for (double m : self.margins) CHECK(m == 0.0);
  CHECK(self.teacher_ranks == self.student_ranks);
  const ProbeTrace t = Probe(f.teacher, f.student, prompt, y);
  REQUIRE(t.margins.size() == y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK(t.margins[i] == t.q_probs[i] - t.p_probs[i]);
    CHECK(std::fabs(t.margins[i]) <= 1.0);
    CHECK(t.teacher_ranks[i] >= 1);
  }
  const auto lp = TokenLogprobs(f.teacher, prompt, y);
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK(t.p_probs[i] == doctest::Approx(std::exp(lp[i])).epsilon(1e-5));
  }
  CHECK_THROWS_AS(Probe(f.teacher, f.student, prompt, TokenSeq{}), Error);
}

TEST_CASE("warmup: detect is monotone in eta") {
  const auto& f = fixtures::InstructionModels();
  SamplingConfig s;
  s.max_new = 20;
  for (std::size_t i = 0; i < 10; ++i) {
    const TokenSeq prompt = EncodePrompt(f.corpus.train[i].prompt);
    for (const TokenSeq& y : Sample(f.student, prompt, 4, s, i)) {
      const ProbeTrace t = Probe(f.teacher, f.student, prompt, y);
      for (DetectMode m : {DetectMode::kTeacherRank, DetectMode::kRankMargin}) {
        std::optional<std::size_t> prev;
        bool first = true;
        for (double eta : {1.0, 2.0, 4.0, 8.0, 16.0}) {
          const auto d = Detect(t, Config(m, eta)).detect_index;
          if (!first) {
            if (!prev) CHECK_FALSE(d.has_value());
            if (prev && d) CHECK(*d >= *prev);
          }
          prev = d;
          first = false;
        }
      }
      std::optional<std::size_t> prev;
      for (double eta : {0.05, 0.1, 0.2, 0.4, 0.8}) {
        const auto d = Detect(t, Config(DetectMode::kProbMargin, eta)).detect_index;
        if (prev && d) CHECK(*d >= *prev);
        if (!prev && eta != 0.05) CHECK_FALSE(d.has_value());
        prev = d;
      }
    }
  }
}

TEST_CASE("warmup: refine shares the pre-detection prefix") {
  const auto& f = fixtures::InstructionModels();
  SamplingConfig s;
  s.max_new = 20;
  std::mt19937_64 rng(4);
  int cases = 0;
  for (std::size_t i = 0; cases < 100; ++i) {
    const TokenSeq prompt = EncodePrompt(f.corpus.train[i % f.corpus.train.size()].prompt);
    const TokenSeq y = Sample(f.student, prompt, 1, s, i)[0];
    MismatchReport r;
    r.detect_index = static_cast<std::size_t>(rng() % y.size());
    WarmupConfig c = Config(DetectMode::kTeacherRank, 4);
    const TokenSeq plus = Refine(f.teacher, prompt, y, r, c);
    const std::size_t d = *r.detect_index;
    REQUIRE(plus.size() >= d);
    CHECK(std::equal(y.ids.begin(), y.ids.begin() + d, plus.ids.begin()));
    CHECK(plus.size() <= c.sampling.max_new);
    CHECK(Refine(f.teacher, prompt, y, r, c) == plus);
    ++cases;
  }
  const TokenSeq prompt = EncodePrompt(f.corpus.test[1].prompt);
  const TokenSeq y = Sample(f.student, prompt, 1, s, 1)[0];
  MismatchReport zero;
  zero.detect_index = 0;
  WarmupConfig c = Config(DetectMode::kTeacherRank, 4);
  SamplingConfig g = c.sampling;
  g.greedy = true;
  CHECK(Refine(f.teacher, prompt, y, zero, c) == Sample(f.teacher, prompt, 1, g, 0)[0]);
  MismatchReport none;
  CHECK_THROWS_AS(Refine(f.teacher, prompt, y, none, c), Error);
}

TEST_CASE("warmup: reward accept examples") {
  RewardDecision a = RewardAccept(Task::kInstruction, EncodeCompletion("a b c d"),
                                  EncodeCompletion("a k"), "a b c d");
  CHECK(a.accept);
  CHECK(a.reward_plus == 1.0);
  CHECK(a.reward_minus == doctest::Approx(RougeL("a k", "a b c d").f));
  RewardDecision m = RewardAccept(Task::kMath, EncodeCompletion("7*5=35#4"),
                                  EncodeCompletion("7*5=35#6"), "7*5=35#5");
  CHECK_FALSE(m.accept);
  CHECK(m.reward_plus == 0.0);
  CHECK(m.reward_minus == 0.0);
  RewardDecision tie = RewardAccept(Task::kInstruction, EncodeCompletion("a b"),
                                    EncodeCompletion("a b"), "a b");
  CHECK_FALSE(tie.accept);
  CHECK_THROWS_AS(RewardAccept(Task::kMath, EncodeCompletion("1#1"), EncodeCompletion("1#2"), ""),
                  Error);
}

TEST_CASE("warmup: identical teacher and student emit nothing") {
  const auto& f = fixtures::InstructionModels();
  const std::vector<Example> corpus(f.corpus.train.begin(), f.corpus.train.begin() + 12);
  for (DetectMode m : {DetectMode::kProbMargin, DetectMode::kRankMargin}) {
    for (double eta : m == DetectMode::kProbMargin ? std::vector<double>{0.01, 0.5, 1.0}
                                                   : std::vector<double>{1, 2, 4, 8, 16}) {
      const WarmupResult r = BuildPairs(f.student, f.student, corpus, Task::kInstruction,
                                        Config(m, eta));
      CHECK(r.pairs.empty());
      CHECK(r.stats.r == 1.0);
      CHECK(r.stats.all == 1.0);
      CHECK(r.stats.refined == 0);
    }
  }
}

TEST_CASE("warmup: build_pairs invariants") {
  const auto& f = fixtures::InstructionModels();
  const std::vector<Example> corpus(f.corpus.train.begin(), f.corpus.train.begin() + 24);
  const WarmupConfig c = Config(DetectMode::kTeacherRank, 2);
  const WarmupResult r = BuildPairs(f.teacher, f.student, corpus, Task::kInstruction, c);
  CHECK(r.pairs.size() <= c.samples_per_prompt * corpus.size());
  CHECK(r.prompts.size() == corpus.size());
  CHECK(r.stats.sequences == c.samples_per_prompt * corpus.size());
  CHECK_FALSE(r.pairs.empty());
  std::size_t accepted = 0, detected = 0;
  for (const PromptLog& l : r.prompts) {
    accepted += l.accepted;
    detected += l.detected;
  }
  CHECK(accepted == r.pairs.size());
  CHECK(detected == r.stats.refined);
  for (const PreferencePair& p : r.pairs) {
    CHECK(SharesPrefix(p));
    CHECK(p.meta.reward_plus > p.meta.reward_minus);
    CHECK(p.meta.eta == 2.0);
    CHECK(p.meta.mode == DetectMode::kTeacherRank);
    CHECK(p.chosen != p.rejected);
  }
  const WarmupResult again = BuildPairs(f.teacher, f.student, corpus, Task::kInstruction, c);
  REQUIRE(again.pairs.size() == r.pairs.size());
  for (std::size_t i = 0; i < r.pairs.size(); ++i) {
    CHECK(again.pairs[i].chosen == r.pairs[i].chosen);
    CHECK(again.pairs[i].rejected == r.pairs[i].rejected);
  }
  // Streams are keyed by example index, so a prefix of the corpus reproduces
  // the matching prefix of the pair list.
  const std::vector<Example> head(corpus.begin(), corpus.begin() + 8);
  const WarmupResult part = BuildPairs(f.teacher, f.student, head, Task::kInstruction, c);
  for (std::size_t i = 0; i < part.pairs.size(); ++i) {
    CHECK(part.pairs[i].chosen == r.pairs[i].chosen);
  }
}

TEST_CASE("warmup: pair file round trip") {
  const auto& f = fixtures::InstructionModels();
  const std::vector<Example> corpus(f.corpus.train.begin(), f.corpus.train.begin() + 16);
  const WarmupResult r =
      BuildPairs(f.teacher, f.student, corpus, Task::kInstruction, Config(DetectMode::kTeacherRank, 2));
  const auto path = (std::filesystem::temp_directory_path() / "wd_pairs_test.jsonl").string();
  WritePairs(path, r.pairs);
  const auto back = ReadPairs(path);
  REQUIRE(back.size() == r.pairs.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].prompt == r.pairs[i].prompt);
    CHECK(back[i].chosen == r.pairs[i].chosen);
    CHECK(back[i].rejected == r.pairs[i].rejected);
    CHECK(back[i].meta.detect_index == r.pairs[i].meta.detect_index);
    CHECK(back[i].meta.reward_plus == r.pairs[i].meta.reward_plus);
    CHECK(SharesPrefix(back[i]));
    CHECK(back[i].meta.reward_plus > back[i].meta.reward_minus);
  }
  std::filesystem::remove(path);
}

TEST_CASE("skd: rank cap limits") {
  const auto& f = fixtures::InstructionModels();
  const std::size_t v = f.teacher.config().vocab_size;
  for (std::size_t i = 0; i < 6; ++i) {
    const TokenSeq prompt = EncodePrompt(f.corpus.test[i].prompt);
    SkdConfig c;
    c.proposal.max_new = 20;
    SamplingConfig g = c.proposal;
    g.greedy = true;
    c.rank_cap = v;
    const SkdOutput open = SkdRefine(f.teacher, f.student, prompt, c);
    CHECK(open.replacements == 0);
    CHECK(open.sequence == Sample(f.student, prompt, 1, g, 0)[0]);
    c.rank_cap = 1;
    const SkdOutput strict = SkdRefine(f.teacher, f.student, prompt, c);
    CHECK(strict.sequence == Sample(f.teacher, prompt, 1, g, 0)[0]);
    // A replacement changes the context of every later step, so totals are
    // not ordered in K. Each single decision is: the first replacement never
    // moves earlier as K grows, and outputs agree before it.
    std::size_t prev_first = 0;
    TokenSeq prev_seq;
    for (std::size_t k = 1; k <= v; ++k) {
      c.rank_cap = k;
      const SkdOutput out = SkdRefine(f.teacher, f.student, prompt, c);
      const TokenSeq student_only = Sample(f.student, prompt, 1, g, 0)[0];
      std::size_t first = 0;
      while (first < out.sequence.size() && first < student_only.size() &&
             out.sequence.ids[first] == student_only.ids[first]) {
        ++first;
      }
      if (k > 1) {
        CHECK(first >= prev_first);
        CHECK(std::equal(out.sequence.ids.begin(), out.sequence.ids.begin() + prev_first,
                         prev_seq.ids.begin()));
      }
      prev_first = first;
      prev_seq = out.sequence;
    }
  }
}

}  // namespace
}  // namespace wd
