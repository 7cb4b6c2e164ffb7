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

#ifndef WARMDISTILL_LM_H_
#define WARMDISTILL_LM_H_

// Tiny decoder-only transformer: pre-LayerNorm blocks with learned absolute
// positions, GELU MLPs and an untied output head.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "warmdistill/rng.h"
#include "warmdistill/tensor.h"
#include "warmdistill/vocab.h"

namespace wd {

struct LmConfig {
  std::size_t vocab_size = 59;
  std::size_t context_len = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_model = 64;
  std::size_t d_ff = 256;
  std::uint64_t seed = 0;

  bool operator==(const LmConfig&) const = default;
};

// Throws kInvalidArgument describing the first violated constraint.
void ValidateConfig(const LmConfig& config);

LmConfig TeacherConfig(std::uint64_t seed);
LmConfig StudentConfig(std::uint64_t seed);

enum class ModelRole { kTeacher, kStudent, kStudentWarmup, kReference };

const char* RoleName(ModelRole role);
ModelRole ParseRole(std::string_view name);

struct ParamEntry {
  std::string name;
  Shape shape;
  std::size_t offset = 0;  // in elements, within the flat parameter block
};

struct ParameterManifest {
  std::vector<ParamEntry> entries;
  std::size_t head_dim = 0;
  std::size_t total = 0;
};

ParameterManifest BuildManifest(const LmConfig& config);

// Rows [offset, offset + length) of a packed batch form one sequence.
struct PackedBatch {
  std::vector<int> tokens;
  std::vector<int> positions;
  std::vector<Segment> segments;
};

PackedBatch Pack(std::span<const std::vector<int>> sequences);

// A prompt and its completion; the unit of teacher-forced scoring and
// supervised training.
struct PromptCompletion {
  TokenSeq prompt;
  TokenSeq completion;
};

// Teacher-forced layout for a set of (prompt, completion) pairs. Each input is
// BOS + prompt + completion minus its last token; target k of example e is
// predicted by logits row target_rows[spans[e].offset + k].
struct TeacherForcedBatch {
  PackedBatch packed;
  std::vector<int> target_rows;
  std::vector<int> targets;
  std::vector<Segment> spans;
};

TeacherForcedBatch BuildTeacherForced(std::span<const PromptCompletion> examples,
                                      const LmConfig& config);

template <typename T>
class BasicLanguageModel {
 public:
  BasicLanguageModel(const LmConfig& config, ModelRole role);
  BasicLanguageModel(const BasicLanguageModel& other);
  BasicLanguageModel& operator=(const BasicLanguageModel& other);
  BasicLanguageModel(BasicLanguageModel&&) noexcept = default;
  BasicLanguageModel& operator=(BasicLanguageModel&&) noexcept = default;

  const LmConfig& config() const { return config_; }
  const ParameterManifest& manifest() const { return manifest_; }
  ModelRole role() const { return role_; }
  void set_role(ModelRole role) { role_ = role; }

  std::span<Tensor<T>> params() { return params_; }
  std::span<const Tensor<T>> params() const { return params_; }
  const Tensor<T>& param(std::string_view name) const;
  Tensor<T>& param(std::string_view name);

  void SetRequiresGrad(bool flag);
  void ZeroGrad();

  // Logits [N, vocab] for every row of the packed batch.
  Tensor<T> Forward(Tape<T>& tape, const PackedBatch& batch) const;

  template <typename U>
  BasicLanguageModel<U> Cast() const {
    BasicLanguageModel<U> out(config_, role_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto src = params_[i].data();
      auto dst = out.params()[i].mutable_data();
      for (std::size_t j = 0; j < src.size(); ++j) dst[j] = static_cast<U>(src[j]);
    }
    return out;
  }

 private:
  void Index();

  LmConfig config_;
  ModelRole role_;
  ParameterManifest manifest_;
  std::vector<Tensor<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

using LanguageModel = BasicLanguageModel<float>;

// Scaled-normal initialization, deterministic in config.seed.
LanguageModel InitModel(const LmConfig& config, ModelRole role = ModelRole::kStudent);

// Per-token log p(completion_i | prompt, completion_<i).
std::vector<double> TokenLogprobs(const LanguageModel& model, const TokenSeq& prompt,
                                  const TokenSeq& completion);

// Teacher-forced logits, one [m x vocab] row-major block per example.
std::vector<std::vector<float>> TeacherForcedLogits(
    const LanguageModel& model, std::span<const PromptCompletion> examples);

// Incremental inference with a per-sequence key/value cache. Push feeds one
// token and returns logits for the next position. The model must outlive
// the decoder.
class IncrementalDecoder {
 public:
  explicit IncrementalDecoder(const LanguageModel& model);

  std::span<const float> Push(int token);
  std::size_t length() const { return length_; }
  std::span<const float> logits() const { return logits_; }

 private:
  const LanguageModel* model_;
  std::size_t length_ = 0;
  std::vector<std::vector<float>> keys_;
  std::vector<std::vector<float>> values_;
  std::vector<float> logits_;
  // Scratch buffers.
  std::vector<float> x_, h_, qkv_, att_, proj_, ff_, scores_;
};

enum class DecodeMode { kGreedy, kSampled };
const char* DecodeModeName(DecodeMode mode);
DecodeMode ParseDecodeMode(std::string_view name);

struct SamplingConfig {
  double temperature = 1.0;
  double top_p = 1.0;
  bool greedy = false;
  std::size_t max_new = 32;
};

void ValidateSampling(const SamplingConfig& config);

// Token choice from one logits row: argmax (lowest id on ties) when greedy,
// otherwise temperature / nucleus sampling. PAD and BOS are never emitted.
int ChooseToken(std::span<const float> logits, const SamplingConfig& config, Rng& rng);

// n completions of `prompt`. Sample j draws from stream DeriveSeed(seed, j).
// Each completion ends at EOS (included) or after max_new tokens.
std::vector<TokenSeq> Sample(const LanguageModel& model, const TokenSeq& prompt,
                             std::size_t n, const SamplingConfig& config,
                             std::uint64_t seed);

struct ContinueConfig {
  DecodeMode mode = DecodeMode::kGreedy;
  double temperature = 1.0;
  double top_p = 1.0;
  std::uint64_t seed = 0;
};

struct Continuation {
  TokenSeq sequence;  // prefix followed by the generated suffix
  DecodeMode mode = DecodeMode::kGreedy;
};

// Extends `prefix` by at most max_new tokens. A prefix already ending in EOS
// is returned unchanged.
Continuation ContinueFrom(const LanguageModel& model, const TokenSeq& prompt,
                          const TokenSeq& prefix, std::size_t max_new,
                          const ContinueConfig& config = {});

struct OptimConfig {
  double learning_rate = 3e-4;
  std::size_t steps = 300;
  std::size_t batch_size = 16;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;
  std::size_t warmup_steps = 0;
  bool cosine = true;
  double min_lr_ratio = 0.1;
  std::uint64_t seed = 0;
};

struct TrainReport {
  std::vector<double> loss_curve;
  std::size_t steps = 0;
};

// Builds the scalar loss for a mini-batch given as indices into the caller's
// dataset.
using Objective = std::function<Tensor<float>(
    Tape<float>&, const LanguageModel&, std::span<const std::size_t>)>;

// Adam with global gradient-norm clipping over epoch-shuffled mini-batches of
// [0, num_items). Throws kNonFinite naming the step on a non-finite loss.
TrainReport Fit(LanguageModel& model, std::size_t num_items, const Objective& objective,
                const OptimConfig& config);

// Learning rate at `step` under linear warmup then optional cosine decay.
double ScheduledLearningRate(const OptimConfig& config, std::size_t step);

void SaveCheckpoint(const LanguageModel& model, const std::string& path);
LanguageModel LoadCheckpoint(const std::string& path);

}  // namespace wd

#endif  // WARMDISTILL_LM_H_
