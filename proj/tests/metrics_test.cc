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

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "oracles.h"
#include "warmdistill/error.h"
#include "warmdistill/metrics.h"

namespace wd {
namespace {

std::vector<std::string> RandomWords(std::mt19937_64& rng, std::size_t max_len,
                                     int alphabet) {
  std::uniform_int_distribution<std::size_t> len(1, max_len);
  std::uniform_int_distribution<int> sym(0, alphabet - 1);
  std::vector<std::string> out(len(rng));
  for (std::string& w : out) w = std::string(1, static_cast<char>('a' + sym(rng)));
  return out;
}

TEST_CASE("rouge_l: examples") {
  const RougeScore same = RougeL("a b c", "a b c");
  CHECK(same.f == 1.0);
  const RougeScore r = RougeL("a b c d", "a c d");
  CHECK(r.precision == doctest::Approx(0.75));
  CHECK(r.recall == doctest::Approx(1.0));
  CHECK(r.f == doctest::Approx(6.0 / 7.0));
  CHECK(r.f == doctest::Approx(0.8571).epsilon(1e-4));
  CHECK(RougeL("a b", "c d").f == 0.0);
  CHECK(RougeL("", "a").f == 0.0);
  CHECK(RougeL("", "").f == 0.0);
}

TEST_CASE("rouge_l: brute-force oracle up to length 12") {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 200; ++t) {
    const auto a = RandomWords(rng, 12, 4);
    const auto b = RandomWords(rng, 12, 4);
    const std::size_t lcs = oracle::BruteForceLcs(a, b);
    CHECK(LcsLength(a, b) == lcs);
    CHECK(RougeL(a, b).f == doctest::Approx(oracle::RougeF(lcs, a.size(), b.size())));
    CHECK(RougeL(a, a).f == 1.0);
    const RougeScore ab = RougeL(a, b);
    const RougeScore ba = RougeL(b, a);
    CHECK(ab.precision == ba.recall);
    CHECK(ab.recall == ba.precision);
    if (a.size() == b.size()) CHECK(ab.f == ba.f);
  }
}

TEST_CASE("rouge_l: asymmetry witness for unequal lengths") {
  const RougeScore ab = RougeL("a b c d", "a x");
  const RougeScore ba = RougeL("a x", "a b c d");
  CHECK(ab.precision != ba.precision);
}

TEST_CASE("exact_match: examples") {
  CHECK(AnswersMatch("= 7", "= 7") == 1);
  CHECK(AnswersMatch("= 7", "= 8") == 0);
  CHECK(AnswersMatch("  =   7 ", "= 7") == 1);
  CHECK(NormalizeAnswer("  a \t b  ") == "a b");
  CHECK(ExtractAnswer("7*5=35#5") == std::optional<std::string>("5"));
  CHECK(ExtractAnswer("1#2#3") == std::optional<std::string>("3"));
  CHECK_FALSE(ExtractAnswer("35").has_value());
  MatchResult ok = ExactMatch("7*5=35#5", "7*5=35#5");
  CHECK(ok.score == 1);
  CHECK_FALSE(ok.missing_delimiter);
  MatchResult wrong = ExactMatch("7*5=36# 6", "7*5=35#5");
  CHECK(wrong.score == 0);
  MatchResult none = ExactMatch("7*5=35", "7*5=35#5");
  CHECK(none.score == 0);
  CHECK(none.missing_delimiter);
  CHECK(ExactMatch("x# 5 ", "y#5").score == 1);
  CHECK_THROWS_AS(ExactMatch("#5", "5"), Error);
}

TEST_CASE("warmup_stats: examples") {
  const std::vector<SequenceOutcome> full{{4, 4, std::nullopt}, {3, 3, std::nullopt}};
  WarmupStats s = ComputeWarmupStats(full);
  CHECK(s.r == 1.0);
  CHECK(s.all == 1.0);
  CHECK(s.len == 3.5);
  CHECK(s.good == 0.0);
  CHECK(s.refined == 0);
  const std::vector<SequenceOutcome> two{{4, 4, std::nullopt}, {4, 2, false}};
  s = ComputeWarmupStats(two);
  CHECK(s.r == 0.75);
  CHECK(s.all == 0.5);
  CHECK_THROWS_AS(ComputeWarmupStats({}), Error);
}

TEST_CASE("warmup_stats: Good counts refined sequences only") {
  // Five cases: two undetected, three refined of which two improved.
  const std::vector<SequenceOutcome> cases{{5, 5, std::nullopt},
                                           {2, 2, std::nullopt},
                                           {6, 1, true},
                                           {4, 0, false},
                                           {3, 2, true}};
  std::size_t refined = 0, improved = 0;
  for (const SequenceOutcome& c : cases) {
    if (c.improved) {
      ++refined;
      improved += *c.improved;
    }
  }
  const WarmupStats s = ComputeWarmupStats(cases);
  CHECK(s.refined == refined);
  CHECK(s.improved == improved);
  CHECK(s.good == doctest::Approx(static_cast<double>(improved) / refined));
  CHECK(s.good == doctest::Approx(2.0 / 3.0));
  CHECK(s.sequences == 5);
  CHECK(s.len == 4.0);
}

TEST_CASE("warmup_stats: ranges and All <= R") {
  std::mt19937_64 rng(22);
  for (int t = 0; t < 200; ++t) {
    std::uniform_int_distribution<std::size_t> n(1, 10), len(1, 20);
    std::vector<SequenceOutcome> v(n(rng));
    for (SequenceOutcome& o : v) {
      o.length = len(rng);
      o.passing = std::uniform_int_distribution<std::size_t>(0, o.length)(rng);
      if (rng() % 2) o.improved = rng() % 2 == 0;
    }
    const WarmupStats s = ComputeWarmupStats(v);
    CHECK(s.all <= s.r);
    CHECK(s.r >= 0.0);
    CHECK(s.r <= 1.0);
    CHECK(s.good >= 0.0);
    CHECK(s.good <= 1.0);
    CHECK(s.len > 0.0);
  }
}

TEST_CASE("warmup_stats: JSON round trip") {
  WarmupStats s;
  s.r = 0.25;
  s.all = 0.125;
  s.len = 7.5;
  s.good = 0.5;
  s.sequences = 8;
  s.refined = 4;
  s.improved = 2;
  const WarmupStats r = WarmupStatsFromJson(WarmupStatsToJson(s));
  CHECK(r.r == s.r);
  CHECK(r.all == s.all);
  CHECK(r.len == s.len);
  CHECK(r.good == s.good);
  CHECK(r.sequences == 8);
  CHECK(r.refined == 4);
  CHECK(r.improved == 2);
}

TEST_CASE("histograms: examples") {
  CHECK(NonTargetStd(std::vector<double>{0.7, 0.1, 0.1, 0.1}, 0) == doctest::Approx(0.0));
  CHECK(NonTargetStd(std::vector<double>{0.5, 0.3, 0.2}, 0) == doctest::Approx(0.05));
  const std::vector<double> uniform(5 * 4, 0.25);
  const std::vector<int> targets{0, 1, 2, 3, 0};
  const DistHistogram u = HistogramFromRows(uniform, 4, targets);
  CHECK(u.target_prob_mean == doctest::Approx(0.25));
  CHECK(u.nontarget_std_mean == doctest::Approx(0.0));
  CHECK(u.positions == 5);
  CHECK(u.target_prob_counts[12] == 5);
  CHECK(u.nontarget_std_counts[0] == 5);
  CHECK_THROWS_AS(HistogramFromRows(uniform, 4, std::vector<int>{0}), Error);
}

TEST_CASE("histograms: totals and bin means") {
  std::mt19937_64 rng(23);
  const std::size_t v = 9, m = 300;
  std::vector<double> probs;
  std::vector<int> targets;
  for (std::size_t r = 0; r < m; ++r) {
    auto row = oracle::RandomSimplex(rng, v);
    probs.insert(probs.end(), row.begin(), row.end());
    targets.push_back(static_cast<int>(rng() % v));
  }
  const DistHistogram h = HistogramFromRows(probs, v, targets);
  std::size_t a = 0, b = 0;
  double ma = 0.0, mb = 0.0;
  for (std::size_t k = 0; k < kHistogramBins; ++k) {
    a += h.target_prob_counts[k];
    b += h.nontarget_std_counts[k];
    ma += h.target_prob_counts[k] * (k + 0.5) / kHistogramBins;
    mb += h.nontarget_std_counts[k] * (k + 0.5) * kStdAxisMax / kHistogramBins;
  }
  CHECK(a == m);
  CHECK(b == m);
  CHECK(std::fabs(ma / m - h.target_prob_mean) <= 0.5 / kHistogramBins);
  CHECK(std::fabs(mb / m - h.nontarget_std_mean) <= 0.5 * kStdAxisMax / kHistogramBins);
  const std::string csv = HistogramCsv(h);
  CHECK(csv.rfind("series,bin_left,bin_right,count\n", 0) == 0);
  std::size_t lines = 0;
  for (char c : csv) lines += c == '\n';
  CHECK(lines == 1 + 2 * kHistogramBins);
  const std::vector<DistHistogram> hs{h, h};
  const std::vector<std::string> labels{"student", "student_warmup"};
  const std::string svg = HistogramSvg(hs, labels);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("student_warmup") != std::string::npos);
}

TEST_CASE("histograms: uniform model") {
  LmConfig c;
  c.n_layers = 1;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 16;
  c.context_len = 32;
  LanguageModel model = InitModel(c);
  for (float& w : model.param("head.w").mutable_data()) w = 0.f;
  for (float& w : model.param("head.b").mutable_data()) w = 0.f;
  const std::vector<PromptCompletion> corpus{{EncodePrompt("=:a b>"), EncodeCompletion("a b")}};
  const DistHistogram h = DistHistograms(model, corpus);
  CHECK(h.positions == 4);
  CHECK(h.target_prob_mean == doctest::Approx(1.0 / c.vocab_size).epsilon(1e-6));
  CHECK(h.nontarget_std_mean < 1e-7);
  CHECK_THROWS_AS(DistHistograms(model, {}), Error);
}

TEST_CASE("metrics csv round trip") {
  const std::vector<MetricRow> rows{{"teacher", "math", "accuracy", 0.5},
                                    {"student", "math", "R", 0.123456789}};
  const std::string csv = MetricsCsv(rows);
  CHECK(csv == "role,task,metric,value\nteacher,math,accuracy,0.500000\n"
               "student,math,R,0.123457\n");
  const auto back = ParseMetricsCsv(csv);
  REQUIRE(back.size() == 2);
  CHECK(back[1].metric == "R");
  CHECK(back[1].value == doctest::Approx(0.123457));
  CHECK_THROWS_AS(ParseMetricsCsv("a,b\n1,2\n"), Error);
}

}  // namespace
}  // namespace wd
