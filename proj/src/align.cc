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

#include "warmdistill/align.h"

#include <cmath>
#include <memory>
#include <numeric>

#include "json.hpp"
#include "warmdistill/error.h"
#include "warmdistill/losses.h"

namespace wd {

const char* AlignVariantName(AlignVariant variant) {
  switch (variant) {
    case AlignVariant::kDpo: return "dpo";
    case AlignVariant::kHinge: return "hinge";
    case AlignVariant::kSimpo: return "simpo";
  }
  return "dpo";
}

AlignVariant ParseAlignVariant(std::string_view name) {
  for (AlignVariant v : {AlignVariant::kDpo, AlignVariant::kHinge, AlignVariant::kSimpo}) {
    if (name == AlignVariantName(v)) return v;
  }
  Fail(ErrorCode::kInvalidArgument, "unknown alignment variant '" + std::string(name) + "'");
}

void ValidateAlignConfig(const AlignConfig& c) {
  Require(c.beta > 0.0 && std::isfinite(c.beta), ErrorCode::kInvalidArgument,
          "beta must be > 0");
  Require(c.delta >= 0.0 && c.gamma >= 0.0, ErrorCode::kInvalidArgument,
          "hinge delta and simpo gamma must be >= 0");
  Require(c.learning_rate >= 0.0, ErrorCode::kInvalidArgument,
          "learning rate must be >= 0");
  Require(c.batch_size >= 1, ErrorCode::kInvalidArgument, "batch size must be >= 1");
}

SequenceScore SequenceLogprob(const LanguageModel& model, const TokenSeq& prompt,
                              const TokenSeq& y) {
  const std::vector<double> lp = TokenLogprobs(model, prompt, y);
  SequenceScore s;
  for (double v : lp) s.total += v;
  s.mean = s.total / static_cast<double>(lp.size());
  return s;
}

double BtPreference(double reward_plus, double reward_minus) {
  Require(std::isfinite(reward_plus) && std::isfinite(reward_minus),
          ErrorCode::kInvalidArgument, "rewards must be finite");
  return 1.0 / (1.0 + std::exp(-(reward_plus - reward_minus)));
}

namespace {

void RequireNonEmpty(const PreferencePair& pair) {
  Require(!pair.chosen.empty() && !pair.rejected.empty(), ErrorCode::kInvalidArgument,
          "preference pair with an empty side");
}

// log(1 + exp(x)) without overflow.
template <typename T>
T Softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename T>
T Sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// Returns the per-pair loss and writes d(loss)/d(margin) to `slope`.
template <typename T>
T LossOfMargin(T margin, const AlignConfig& config, T* slope) {
  switch (config.variant) {
    case AlignVariant::kDpo:
      if (slope) *slope = -Sigmoid(-margin);
      return Softplus(-margin);
    case AlignVariant::kHinge: {
      const T gap = T(config.delta) - margin;
      if (slope) *slope = gap > T(0) ? T(-1) : T(0);
      return gap > T(0) ? gap : T(0);
    }
    case AlignVariant::kSimpo: {
      const T z = margin - T(config.gamma);
      if (slope) *slope = -Sigmoid(-z);
      return Softplus(-z);
    }
  }
  return T(0);
}

}  // namespace

ReferenceScores ScoreReference(const LanguageModel& reference, const PreferencePair& pair) {
  RequireNonEmpty(pair);
  return {SequenceLogprob(reference, pair.prompt, pair.chosen).total,
          SequenceLogprob(reference, pair.prompt, pair.rejected).total};
}

double PreferenceMargin(const LanguageModel& policy, const LanguageModel& reference,
                        const PreferencePair& pair, const AlignConfig& config) {
  ValidateAlignConfig(config);
  RequireNonEmpty(pair);
  const SequenceScore pc = SequenceLogprob(policy, pair.prompt, pair.chosen);
  const SequenceScore pr = SequenceLogprob(policy, pair.prompt, pair.rejected);
  if (config.variant == AlignVariant::kSimpo) {
    return config.beta * pc.mean - config.beta * pr.mean;
  }
  const ReferenceScores ref = ScoreReference(reference, pair);
  return config.beta * ((pc.total - ref.chosen) - (pr.total - ref.rejected));
}

double PreferenceLossFromMargin(double margin, const AlignConfig& config) {
  ValidateAlignConfig(config);
  return LossOfMargin<double>(margin, config, nullptr);
}

double PreferenceLoss(const LanguageModel& policy, const LanguageModel& reference,
                      const PreferencePair& pair, const AlignConfig& config) {
  return PreferenceLossFromMargin(PreferenceMargin(policy, reference, pair, config), config);
}

template <typename T>
Tensor<T> PreferenceLossTaped(Tape<T>& tape, const BasicLanguageModel<T>& policy,
                              std::span<const PreferencePair> pairs,
                              std::span<const ReferenceScores> reference,
                              const AlignConfig& config) {
  ValidateAlignConfig(config);
  Require(!pairs.empty(), ErrorCode::kInvalidArgument, "preference loss needs >= 1 pair");
  const bool simpo = config.variant == AlignVariant::kSimpo;
  Require(simpo || reference.size() == pairs.size(), ErrorCode::kInvalidArgument,
          "one reference score per pair is required");
  std::vector<PromptCompletion> examples;
  examples.reserve(2 * pairs.size());
  for (const PreferencePair& p : pairs) {
    RequireNonEmpty(p);
    examples.push_back({p.prompt, p.chosen});
    examples.push_back({p.prompt, p.rejected});
  }
  const TeacherForcedBatch tf = BuildTeacherForced(examples, policy.config());
  Tensor<T> logits = policy.Forward(tape, tf.packed);
  Tensor<T> rows = ops::EmbedGather(tape, logits, tf.target_rows);
  Tensor<T> logp = ops::Pick(tape, ops::LogSoftmax(tape, rows), tf.targets);
  // Per-sequence sums (or means for simpo) as a [2P, M] x [M, 1] product.
  const std::size_t m = tf.targets.size();
  const std::size_t s = examples.size();
  std::vector<T> weights(s * m, T(0));
  for (std::size_t i = 0; i < s; ++i) {
    const Segment& span = tf.spans[i];
    const T w = simpo ? T(1) / T(span.length) : T(1);
    for (std::size_t k = 0; k < span.length; ++k) weights[i * m + span.offset + k] = w;
  }
  Tensor<T> seq = ops::MatMul(tape, Tensor<T>::FromData({s, m}, std::move(weights)),
                              ops::Reshape(tape, logp, {m, 1}));
  const std::size_t n = pairs.size();
  const T beta = T(config.beta);
  std::vector<T> slopes(n);
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    T gap = seq.data()[2 * i] - seq.data()[2 * i + 1];
    if (!simpo) gap -= T(reference[i].chosen) - T(reference[i].rejected);
    total += LossOfMargin(beta * gap, config, &slopes[i]);
  }
  Tensor<T> out = tape.MakeOutput({1}, {&seq});
  out.mutable_data()[0] = total / T(n);
  CheckFinite<T>("preference_loss", out.data());
  tape.Record("preference_loss", {&seq}, out, [seq, out, slopes = std::move(slopes), beta]() {
    if (!seq.requires_grad()) return;
    T* g = seq.node()->EnsureGrad();
    const T up = out.grad()[0] * beta / T(slopes.size());
    for (std::size_t i = 0; i < slopes.size(); ++i) {
      g[2 * i] += up * slopes[i];
      g[2 * i + 1] -= up * slopes[i];
    }
  });
  return out;
}

template Tensor<float> PreferenceLossTaped(Tape<float>&, const BasicLanguageModel<float>&,
                                           std::span<const PreferencePair>,
                                           std::span<const ReferenceScores>,
                                           const AlignConfig&);
template Tensor<double> PreferenceLossTaped(Tape<double>&, const BasicLanguageModel<double>&,
                                            std::span<const PreferencePair>,
                                            std::span<const ReferenceScores>,
                                            const AlignConfig&);

std::string AlignReportToJson(const AlignReport& r) {
  nlohmann::ordered_json j;
  j["variant"] = AlignVariantName(r.variant);
  j["beta"] = r.beta;
  j["steps"] = r.steps;
  j["final_loss"] = r.final_loss;
  j["implicit_accuracy"] = r.implicit_accuracy;
  return j.dump(2) + "\n";
}

AlignResult WarmupAlign(const LanguageModel& student, std::span<const PreferencePair> pairs,
                        const AlignConfig& config) {
  ValidateAlignConfig(config);
  Require(!pairs.empty(), ErrorCode::kInvalidArgument, "alignment needs >= 1 pair");
  const LanguageModel reference = student;
  auto data = std::make_shared<std::vector<PreferencePair>>(pairs.begin(), pairs.end());
  auto ref = std::make_shared<std::vector<ReferenceScores>>();
  if (config.variant != AlignVariant::kSimpo) {
    for (const PreferencePair& p : *data) ref->push_back(ScoreReference(reference, p));
  }
  AlignResult result{student, {}};
  result.model.set_role(ModelRole::kStudentWarmup);
  OptimConfig oc;
  oc.learning_rate = config.learning_rate;
  oc.batch_size = config.batch_size;
  oc.steps = config.epochs * ((data->size() + config.batch_size - 1) / config.batch_size);
  oc.cosine = false;
  oc.seed = config.seed;
  const Objective objective = [data, ref, config](Tape<float>& tape, const LanguageModel& m,
                                                  std::span<const std::size_t> idx) {
    std::vector<PreferencePair> batch;
    std::vector<ReferenceScores> scores;
    for (std::size_t i : idx) {
      batch.push_back((*data)[i]);
      if (!ref->empty()) scores.push_back((*ref)[i]);
    }
    return PreferenceLossTaped<float>(tape, m, batch, scores, config);
  };
  const TrainReport train = Fit(result.model, data->size(), objective, oc);
  AlignReport& rep = result.report;
  rep.variant = config.variant;
  rep.beta = config.beta;
  rep.steps = train.steps;
  rep.loss_curve = train.loss_curve;
  std::size_t correct = 0;
  double loss = 0.0;
  for (const PreferencePair& p : *data) {
    const double margin = PreferenceMargin(result.model, reference, p, config);
    correct += margin > 0.0;
    loss += PreferenceLossFromMargin(margin, config);
  }
  rep.final_loss = loss / static_cast<double>(data->size());
  rep.implicit_accuracy = static_cast<double>(correct) / static_cast<double>(data->size());
  return result;
}

}  // namespace wd
