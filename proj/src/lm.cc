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

#include "warmdistill/lm.h"

#include <cmath>
#include <numbers>

#include "kernels.h"

namespace wd {

void ValidateConfig(const LmConfig& c) {
  Require(c.vocab_size >= 4, ErrorCode::kInvalidArgument, "vocab_size must be >= 4");
  Require(c.context_len >= 2, ErrorCode::kInvalidArgument, "context_len must be >= 2");
  Require(c.n_layers >= 1, ErrorCode::kInvalidArgument, "n_layers must be >= 1");
  Require(c.n_heads >= 1, ErrorCode::kInvalidArgument, "n_heads must be >= 1");
  Require(c.d_model >= 1 && c.d_ff >= 1, ErrorCode::kInvalidArgument,
          "d_model and d_ff must be positive");
  Require(c.d_model % c.n_heads == 0, ErrorCode::kInvalidArgument,
          "d_model (" + std::to_string(c.d_model) + ") is not divisible by n_heads (" +
              std::to_string(c.n_heads) + ")");
}

LmConfig TeacherConfig(std::uint64_t seed) {
  LmConfig c;
  c.vocab_size = Vocab::Char().size();
  c.context_len = 64;
  c.n_layers = 4;
  c.n_heads = 4;
  c.d_model = 128;
  c.d_ff = 512;
  c.seed = seed;
  return c;
}

LmConfig StudentConfig(std::uint64_t seed) {
  LmConfig c;
  c.vocab_size = Vocab::Char().size();
  c.context_len = 64;
  c.n_layers = 2;
  c.n_heads = 4;
  c.d_model = 64;
  c.d_ff = 256;
  c.seed = seed;
  return c;
}

const char* RoleName(ModelRole role) {
  switch (role) {
    case ModelRole::kTeacher: return "teacher";
    case ModelRole::kStudent: return "student";
    case ModelRole::kStudentWarmup: return "student_warmup";
    case ModelRole::kReference: return "reference";
  }
  return "student";
}

ModelRole ParseRole(std::string_view name) {
  if (name == "teacher") return ModelRole::kTeacher;
  if (name == "student") return ModelRole::kStudent;
  if (name == "student_warmup") return ModelRole::kStudentWarmup;
  if (name == "reference") return ModelRole::kReference;
  Fail(ErrorCode::kInvalidArgument, "unknown model role '" + std::string(name) + "'");
}

ParameterManifest BuildManifest(const LmConfig& c) {
  ValidateConfig(c);
  ParameterManifest m;
  m.head_dim = c.d_model / c.n_heads;
  auto add = [&m](std::string name, Shape shape) {
    const std::size_t n = NumElements(shape);
    m.entries.push_back({std::move(name), std::move(shape), m.total});
    m.total += n;
  };
  const std::size_t d = c.d_model;
  add("tok_emb", {c.vocab_size, d});
  add("pos_emb", {c.context_len, d});
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const std::string p = "h" + std::to_string(l) + ".";
    add(p + "ln1.g", {d});
    add(p + "ln1.b", {d});
    add(p + "attn.qkv.w", {d, 3 * d});
    add(p + "attn.qkv.b", {3 * d});
    add(p + "attn.proj.w", {d, d});
    add(p + "attn.proj.b", {d});
    add(p + "ln2.g", {d});
    add(p + "ln2.b", {d});
    add(p + "mlp.fc.w", {d, c.d_ff});
    add(p + "mlp.fc.b", {c.d_ff});
    add(p + "mlp.proj.w", {c.d_ff, d});
    add(p + "mlp.proj.b", {d});
  }
  add("ln_f.g", {d});
  add("ln_f.b", {d});
  add("head.w", {d, c.vocab_size});
  add("head.b", {c.vocab_size});
  return m;
}

PackedBatch Pack(std::span<const std::vector<int>> sequences) {
  PackedBatch batch;
  for (const std::vector<int>& seq : sequences) {
    Require(!seq.empty(), ErrorCode::kInvalidArgument, "cannot pack an empty sequence");
    batch.segments.push_back({batch.tokens.size(), seq.size()});
    for (std::size_t i = 0; i < seq.size(); ++i) {
      batch.tokens.push_back(seq[i]);
      batch.positions.push_back(static_cast<int>(i));
    }
  }
  return batch;
}

TeacherForcedBatch BuildTeacherForced(std::span<const PromptCompletion> examples,
                                      const LmConfig& config) {
  TeacherForcedBatch out;
  std::vector<std::vector<int>> inputs;
  inputs.reserve(examples.size());
  std::size_t row = 0;
  for (const PromptCompletion& ex : examples) {
    Require(!ex.completion.empty(), ErrorCode::kInvalidArgument,
            "teacher-forced scoring needs a non-empty completion");
    const std::size_t len = ex.prompt.size() + ex.completion.size();
    Require(len <= config.context_len, ErrorCode::kContextOverflow,
            "prompt + completion length " + std::to_string(len) +
                " exceeds context " + std::to_string(config.context_len));
    std::vector<int> input;
    input.reserve(len);
    input.push_back(kBosId);
    input.insert(input.end(), ex.prompt.ids.begin(), ex.prompt.ids.end());
    input.insert(input.end(), ex.completion.ids.begin(), ex.completion.ids.end() - 1);
    for (int id : input) {
      Require(id >= 0 && static_cast<std::size_t>(id) < config.vocab_size,
              ErrorCode::kInvalidArgument, "token id out of vocabulary range");
    }
    out.spans.push_back({out.targets.size(), ex.completion.size()});
    for (std::size_t k = 0; k < ex.completion.size(); ++k) {
      const int target = ex.completion.ids[k];
      Require(target >= 0 && static_cast<std::size_t>(target) < config.vocab_size,
              ErrorCode::kInvalidArgument, "target id out of vocabulary range");
      out.target_rows.push_back(static_cast<int>(row + ex.prompt.size() + k));
      out.targets.push_back(target);
    }
    row += input.size();
    inputs.push_back(std::move(input));
  }
  out.packed = Pack(inputs);
  return out;
}

// ------------------------------------------------------------------ model

template <typename T>
BasicLanguageModel<T>::BasicLanguageModel(const LmConfig& config, ModelRole role)
    : config_(config), role_(role), manifest_(BuildManifest(config)) {
  for (const ParamEntry& e : manifest_.entries) {
    params_.push_back(Tensor<T>::Zeros(e.shape));
  }
  Index();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const std::string& name = manifest_.entries[i].name;
    if (name.ends_with("ln1.g") || name.ends_with("ln2.g") || name == "ln_f.g") {
      for (T& v : params_[i].mutable_data()) v = T(1);
    }
  }
}

template <typename T>
BasicLanguageModel<T>::BasicLanguageModel(const BasicLanguageModel& other)
    : config_(other.config_), role_(other.role_), manifest_(other.manifest_) {
  for (const Tensor<T>& p : other.params_) params_.push_back(p.Clone(p.requires_grad()));
  Index();
}

template <typename T>
BasicLanguageModel<T>& BasicLanguageModel<T>::operator=(const BasicLanguageModel& other) {
  if (this != &other) *this = BasicLanguageModel(other);
  return *this;
}

template <typename T>
void BasicLanguageModel<T>::Index() {
  index_.clear();
  for (std::size_t i = 0; i < manifest_.entries.size(); ++i) {
    index_.emplace(manifest_.entries[i].name, i);
  }
}

template <typename T>
const Tensor<T>& BasicLanguageModel<T>::param(std::string_view name) const {
  auto it = index_.find(std::string(name));
  Require(it != index_.end(), ErrorCode::kNotFound,
          "no parameter named '" + std::string(name) + "'");
  return params_[it->second];
}

template <typename T>
Tensor<T>& BasicLanguageModel<T>::param(std::string_view name) {
  auto it = index_.find(std::string(name));
  Require(it != index_.end(), ErrorCode::kNotFound,
          "no parameter named '" + std::string(name) + "'");
  return params_[it->second];
}

template <typename T>
void BasicLanguageModel<T>::SetRequiresGrad(bool flag) {
  for (Tensor<T>& p : params_) p.set_requires_grad(flag);
}

template <typename T>
void BasicLanguageModel<T>::ZeroGrad() {
  for (Tensor<T>& p : params_) p.zero_grad();
}

template <typename T>
Tensor<T> BasicLanguageModel<T>::Forward(Tape<T>& tape, const PackedBatch& batch) const {
  Require(!batch.tokens.empty(), ErrorCode::kInvalidArgument, "empty batch");
  for (const Segment& s : batch.segments) {
    Require(s.length <= config_.context_len, ErrorCode::kContextOverflow,
            "sequence length " + std::to_string(s.length) + " exceeds context " +
                std::to_string(config_.context_len));
  }
  using namespace ops;
  Tensor<T> x = Add(tape, EmbedGather(tape, param("tok_emb"), batch.tokens),
                    EmbedGather(tape, param("pos_emb"), batch.positions));
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const std::string p = "h" + std::to_string(l) + ".";
    Tensor<T> h = LayerNorm(tape, x, param(p + "ln1.g"), param(p + "ln1.b"));
    Tensor<T> qkv = Add(tape, MatMul(tape, h, param(p + "attn.qkv.w")),
                        param(p + "attn.qkv.b"));
    Tensor<T> att = CausalAttention(tape, qkv, config_.n_heads, batch.segments);
    att = Add(tape, MatMul(tape, att, param(p + "attn.proj.w")), param(p + "attn.proj.b"));
    x = Add(tape, x, att);
    h = LayerNorm(tape, x, param(p + "ln2.g"), param(p + "ln2.b"));
    Tensor<T> ff = Gelu(tape, Add(tape, MatMul(tape, h, param(p + "mlp.fc.w")),
                                  param(p + "mlp.fc.b")));
    ff = Add(tape, MatMul(tape, ff, param(p + "mlp.proj.w")), param(p + "mlp.proj.b"));
    x = Add(tape, x, ff);
  }
  x = LayerNorm(tape, x, param("ln_f.g"), param("ln_f.b"));
  return Add(tape, MatMul(tape, x, param("head.w")), param("head.b"));
}

template class BasicLanguageModel<float>;
template class BasicLanguageModel<double>;

namespace {

// Box-Muller on the portable uniform source, so initialization does not
// depend on the standard library's normal_distribution.
double NormalSample(Rng& rng) {
  double u1 = UniformUnit(rng);
  while (u1 <= 0.0) u1 = UniformUnit(rng);
  const double u2 = UniformUnit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace

LanguageModel InitModel(const LmConfig& config, ModelRole role) {
  LanguageModel model(config, role);
  Rng rng(config.seed);
  const double base = 0.02;
  const double residual = base / std::sqrt(2.0 * static_cast<double>(config.n_layers));
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    const std::string& name = model.manifest().entries[i].name;
    const bool matrix = name.ends_with(".w") || name.ends_with("_emb");
    if (!matrix) continue;
    const double stddev =
        (name.ends_with("attn.proj.w") || name.ends_with("mlp.proj.w")) ? residual : base;
    for (float& v : model.params()[i].mutable_data()) {
      v = static_cast<float>(stddev * NormalSample(rng));
    }
  }
  return model;
}

std::vector<double> TokenLogprobs(const LanguageModel& model, const TokenSeq& prompt,
                                  const TokenSeq& completion) {
  const PromptCompletion ex{prompt, completion};
  std::vector<std::vector<float>> logits =
      TeacherForcedLogits(model, std::span<const PromptCompletion>(&ex, 1));
  const std::size_t v = model.config().vocab_size;
  std::vector<double> out(completion.size());
  std::vector<double> row(v), logp(v);
  for (std::size_t k = 0; k < completion.size(); ++k) {
    for (std::size_t j = 0; j < v; ++j) row[j] = logits[0][k * v + j];
    kernels::LogSoftmaxRow(row.data(), logp.data(), v);
    out[k] = logp[static_cast<std::size_t>(completion.ids[k])];
  }
  return out;
}

std::vector<std::vector<float>> TeacherForcedLogits(
    const LanguageModel& model, std::span<const PromptCompletion> examples) {
  constexpr std::size_t kChunk = 64;
  const std::size_t v = model.config().vocab_size;
  std::vector<std::vector<float>> out;
  out.reserve(examples.size());
  for (std::size_t start = 0; start < examples.size(); start += kChunk) {
    const std::size_t count = std::min(kChunk, examples.size() - start);
    TeacherForcedBatch tf = BuildTeacherForced(examples.subspan(start, count), model.config());
    Tape<float> tape(TapeMode::kInference);
    Tensor<float> logits = model.Forward(tape, tf.packed);
    for (const Segment& span : tf.spans) {
      std::vector<float> block(span.length * v);
      for (std::size_t k = 0; k < span.length; ++k) {
        const std::size_t r = static_cast<std::size_t>(tf.target_rows[span.offset + k]);
        std::copy_n(logits.data().data() + r * v, v, block.data() + k * v);
      }
      out.push_back(std::move(block));
    }
  }
  return out;
}

}  // namespace wd
