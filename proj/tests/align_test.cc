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
#include <vector>

#include "doctest.h"
#include "fixtures.h"
#include "oracles.h"
#include "warmdistill/align.h"
#include "warmdistill/error.h"

namespace wd {
namespace {

PreferencePair MakePair(const char* prompt, const char* chosen, const char* rejected) {
  PreferencePair p;
  p.prompt = EncodePrompt(prompt);
  p.chosen = EncodeCompletion(chosen);
  p.rejected = EncodeCompletion(rejected);
  return p;
}

std::vector<PreferencePair> SomePairs() {
  return {MakePair("=:a b c>", "a b c", "a b d"), MakePair("~:c d>", "d c", "d"),
          MakePair("^:e>", "E", "e f g"), MakePair("=:h i j k>", "h i j k", "h j")};
}

AlignConfig Variant(AlignVariant v, double beta) {
  AlignConfig c;
  c.variant = v;
  c.beta = beta;
  return c;
}

TEST_CASE("align: sequence logprob") {
  LanguageModel m = InitModel(fixtures::MiniConfig(1, 16, 1));
  for (float& w : m.param("head.w").mutable_data()) w = 0.f;
  for (float& w : m.param("head.b").mutable_data()) w = 0.f;
  const TokenSeq prompt = EncodePrompt("=:a b c d>");
  const TokenSeq y = EncodeCompletion("a b");
  REQUIRE(y.size() == 4);
  const TokenSeq five{{4, 5, 6, 7, kEosId}};
  const double v = static_cast<double>(m.config().vocab_size);
  CHECK(SequenceLogprob(m, prompt, five).total == doctest::Approx(-5 * std::log(v)).epsilon(1e-6));
  LanguageModel r = InitModel(fixtures::MiniConfig(2, 16, 7));
  const SequenceScore t = SequenceLogprob(r, prompt, y);
  const auto lp = TokenLogprobs(r, prompt, y);
  double sum = 0.0;
  for (double x : lp) sum += x;
  CHECK(t.total == sum);
  CHECK(std::fabs(t.mean * y.size() - t.total) < 1e-9);
}

TEST_CASE("align: Bradley-Terry preference") {
  CHECK(BtPreference(0.3, 0.3) == 0.5);
  CHECK(BtPreference(0.2, 0.0) == doctest::Approx(oracle::Sigmoid(0.2)).epsilon(1e-15));
  CHECK(BtPreference(0.2, 0.0) == doctest::Approx(0.5498).epsilon(1e-4));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0, 3);
  for (int i = 0; i < 100; ++i) {
    const double a = n(rng), b = n(rng);
    CHECK(BtPreference(a, b) + BtPreference(b, a) == doctest::Approx(1.0).epsilon(1e-15));
  }
  CHECK_THROWS_AS(BtPreference(NAN, 0), Error);
}

TEST_CASE("align: loss examples") {
  LanguageModel m = InitModel(fixtures::MiniConfig(2, 16, 3));
  for (const PreferencePair& p : SomePairs()) {
    for (double beta : {0.01, 0.1, 2.0, 50.0}) {
      const double l = PreferenceLoss(m, m, p, Variant(AlignVariant::kDpo, beta));
      CHECK(std::fabs(l - std::log(2.0)) <= 1e-9);
    }
    AlignConfig hinge = Variant(AlignVariant::kHinge, 0.5);
    hinge.delta = 0.0;
    CHECK(PreferenceLoss(m, m, p, hinge) == 0.0);
  }
  const double inner = 0.5 * (0.2 - (-0.2));
  CHECK(inner == doctest::Approx(0.2));
  const double dpo = PreferenceLossFromMargin(inner, Variant(AlignVariant::kDpo, 0.5));
  CHECK(dpo == doctest::Approx(-std::log(oracle::Sigmoid(0.2))).epsilon(1e-12));
  CHECK(dpo == doctest::Approx(0.5981).epsilon(1e-4));
  CHECK(AlignConfig{}.variant == AlignVariant::kDpo);
  PreferencePair empty = SomePairs()[0];
  empty.rejected = TokenSeq{};
  CHECK_THROWS_AS(PreferenceLoss(m, m, empty, AlignConfig{}), Error);
}

TEST_CASE("align: loss shape in the margin") {
  const AlignConfig dpo = Variant(AlignVariant::kDpo, 0.5);
  AlignConfig hinge = Variant(AlignVariant::kHinge, 0.5);
  hinge.delta = 1.0;
  double prev_dpo = INFINITY, prev_hinge = INFINITY;
  for (double x = -5.0; x <= 5.0; x += 0.125) {
    const double d = PreferenceLossFromMargin(x, dpo);
    const double h = PreferenceLossFromMargin(x, hinge);
    CHECK(d < prev_dpo);
    CHECK(h <= prev_hinge);
    if (x >= hinge.delta) CHECK(h == 0.0);
    prev_dpo = d;
    prev_hinge = h;
  }
  // The bracket crosses delta / beta exactly where the scaled margin reaches
  // delta.
  LanguageModel a = InitModel(fixtures::MiniConfig(1, 16, 4));
  LanguageModel b = InitModel(fixtures::MiniConfig(1, 16, 5));
  const PreferencePair p = SomePairs()[0];
  const double m = PreferenceMargin(a, b, p, hinge);
  const double bracket = m / hinge.beta;
  CHECK(PreferenceLoss(a, b, p, hinge) ==
        doctest::Approx(std::max(0.0, hinge.delta - hinge.beta * bracket)));
}

TEST_CASE("align: simpo ignores the reference") {
  LanguageModel policy = InitModel(fixtures::MiniConfig(1, 16, 6));
  LanguageModel ref = InitModel(fixtures::MiniConfig(1, 16, 7));
  const AlignConfig simpo = Variant(AlignVariant::kSimpo, 2.0);
  for (const PreferencePair& p : SomePairs()) {
    const double before = PreferenceLoss(policy, ref, p, simpo);
    LanguageModel moved = ref;
    for (float& w : moved.param("head.w").mutable_data()) w += 0.5f;
    CHECK(PreferenceLoss(policy, moved, p, simpo) == before);
    const SequenceScore c = SequenceLogprob(policy, p.prompt, p.chosen);
    const SequenceScore r = SequenceLogprob(policy, p.prompt, p.rejected);
    const double z = 2.0 * c.mean - 2.0 * r.mean - simpo.gamma;
    CHECK(before == doctest::Approx(-std::log(oracle::Sigmoid(z))).epsilon(1e-12));
  }
}

TEST_CASE("align: taped loss matches the scalar path") {
  LanguageModel policy = InitModel(fixtures::MiniConfig(2, 16, 8));
  LanguageModel ref = InitModel(fixtures::MiniConfig(2, 16, 9));
  const std::vector<PreferencePair> pairs = SomePairs();
  for (AlignVariant v : {AlignVariant::kDpo, AlignVariant::kHinge, AlignVariant::kSimpo}) {
    const AlignConfig c = Variant(v, 0.7);
    std::vector<ReferenceScores> scores;
    double expected = 0.0;
    for (const PreferencePair& p : pairs) {
      scores.push_back(ScoreReference(ref, p));
      expected += PreferenceLoss(policy, ref, p, c);
    }
    expected /= pairs.size();
    BasicLanguageModel<double> wide = policy.Cast<double>();
    Tape<double> tape(TapeMode::kInference);
    const double got = PreferenceLossTaped<double>(tape, wide, pairs, scores, c).item();
    CHECK(got == doctest::Approx(expected).epsilon(1e-5));
  }
}

TEST_CASE("align: gradients of every variant") {
  LanguageModel policy = InitModel(fixtures::MiniConfig(2, 8, 10));
  LanguageModel ref = InitModel(fixtures::MiniConfig(2, 8, 11));
  const std::vector<PreferencePair> pairs = SomePairs();
  std::vector<ReferenceScores> scores;
  for (const PreferencePair& p : pairs) scores.push_back(ScoreReference(ref, p));
  for (AlignVariant v : {AlignVariant::kDpo, AlignVariant::kHinge, AlignVariant::kSimpo}) {
    AlignConfig c = Variant(v, 0.7);
    c.delta = 5.0;
    BasicLanguageModel<double> wide = policy.Cast<double>();
    std::vector<Tensor<double>> leaves(wide.params().begin(), wide.params().end());
    const double err = GradCheckLeaves(
        [&](Tape<double>& tape) { return PreferenceLossTaped<double>(tape, wide, pairs, scores, c); },
        leaves, 1e-6, 12);
    CHECK_MESSAGE(err < 1e-4, AlignVariantName(v));
  }
}

TEST_CASE("align: warmup_align") {
  const LanguageModel student = InitModel(fixtures::MiniConfig(1, 16, 12));
  const std::vector<PreferencePair> one{SomePairs()[0]};
  AlignConfig c;
  c.epochs = 0;
  const AlignResult none = WarmupAlign(student, one, c);
  CHECK(none.model.role() == ModelRole::kStudentWarmup);
  CHECK(none.report.steps == 0);
  for (std::size_t i = 0; i < student.params().size(); ++i) {
    auto x = student.params()[i].data();
    auto y = none.model.params()[i].data();
    CHECK(std::equal(x.begin(), x.end(), y.begin()));
  }
  c.epochs = 60;
  c.learning_rate = 1e-3;
  c.beta = 1.0;
  const AlignResult fit = WarmupAlign(student, one, c);
  CHECK(fit.report.steps == 60);
  CHECK(fit.report.implicit_accuracy == 1.0);
  CHECK(fit.report.final_loss < std::log(2.0));
  CHECK(fit.report.loss_curve.size() == 60);
  const std::string json = AlignReportToJson(fit.report);
  for (const char* key : {"variant", "beta", "steps", "final_loss", "implicit_accuracy"}) {
    CHECK(json.find(std::string("\"") + key + "\"") != std::string::npos);
  }
  CHECK_THROWS_AS(WarmupAlign(student, {}, c), Error);
  for (AlignVariant v : {AlignVariant::kDpo, AlignVariant::kHinge, AlignVariant::kSimpo}) {
    CHECK(ParseAlignVariant(AlignVariantName(v)) == v);
  }
}

}  // namespace
}  // namespace wd
