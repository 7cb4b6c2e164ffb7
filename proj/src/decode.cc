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
#include <numeric>

#include "kernels.h"
#include "warmdistill/lm.h"

namespace wd {

IncrementalDecoder::IncrementalDecoder(const LanguageModel& model)
    : model_(&model),
      keys_(model.config().n_layers),
      values_(model.config().n_layers) {
  const LmConfig& c = model.config();
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    keys_[l].reserve(c.context_len * c.d_model);
    values_[l].reserve(c.context_len * c.d_model);
  }
  logits_.resize(c.vocab_size);
  x_.resize(c.d_model);
  h_.resize(c.d_model);
  qkv_.resize(3 * c.d_model);
  att_.resize(c.d_model);
  proj_.resize(c.d_model);
  ff_.resize(c.d_ff);
  scores_.resize(c.context_len);
}

std::span<const float> IncrementalDecoder::Push(int token) {
  const LmConfig& c = model_->config();
  Require(length_ < c.context_len, ErrorCode::kContextOverflow,
          "decoder context of " + std::to_string(c.context_len) + " exhausted");
  Require(token >= 0 && static_cast<std::size_t>(token) < c.vocab_size,
          ErrorCode::kInvalidArgument, "token id out of vocabulary range");
  const std::size_t d = c.d_model, pos = length_;
  const LanguageModel& m = *model_;
  const float* tok = m.param("tok_emb").data().data() + static_cast<std::size_t>(token) * d;
  const float* pe = m.param("pos_emb").data().data() + pos * d;
  for (std::size_t j = 0; j < d; ++j) x_[j] = tok[j] + pe[j];

  auto affine = [](const float* in, const Tensor<float>& w, const Tensor<float>& b,
                   float* out, std::size_t k, std::size_t n) {
    kernels::Gemm(in, w.data().data(), out, 1, k, n);
    for (std::size_t j = 0; j < n; ++j) out[j] += b.data()[j];
  };

  const std::size_t hd = d / c.n_heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const std::string p = "h" + std::to_string(l) + ".";
    kernels::LayerNormRows(x_.data(), m.param(p + "ln1.g").data().data(),
                           m.param(p + "ln1.b").data().data(), h_.data(),
                           static_cast<float*>(nullptr), static_cast<float*>(nullptr),
                           1, d, 1e-5f);
    affine(h_.data(), m.param(p + "attn.qkv.w"), m.param(p + "attn.qkv.b"), qkv_.data(), d,
           3 * d);
    keys_[l].insert(keys_[l].end(), qkv_.begin() + d, qkv_.begin() + 2 * d);
    values_[l].insert(values_[l].end(), qkv_.begin() + 2 * d, qkv_.end());
    for (std::size_t head = 0; head < c.n_heads; ++head) {
      const std::size_t col = head * hd;
      float mx = -std::numeric_limits<float>::infinity();
      for (std::size_t t = 0; t <= pos; ++t) {
        float s = 0;
        const float* k = keys_[l].data() + t * d + col;
        for (std::size_t j = 0; j < hd; ++j) s += qkv_[col + j] * k[j];
        scores_[t] = s * scale;
        mx = std::max(mx, scores_[t]);
      }
      float total = 0;
      for (std::size_t t = 0; t <= pos; ++t) {
        scores_[t] = std::exp(scores_[t] - mx);
        total += scores_[t];
      }
      for (std::size_t j = 0; j < hd; ++j) att_[col + j] = 0;
      for (std::size_t t = 0; t <= pos; ++t) {
        const float w = scores_[t] / total;
        const float* v = values_[l].data() + t * d + col;
        for (std::size_t j = 0; j < hd; ++j) att_[col + j] += w * v[j];
      }
    }
    affine(att_.data(), m.param(p + "attn.proj.w"), m.param(p + "attn.proj.b"), proj_.data(),
           d, d);
    for (std::size_t j = 0; j < d; ++j) x_[j] += proj_[j];
    kernels::LayerNormRows(x_.data(), m.param(p + "ln2.g").data().data(),
                           m.param(p + "ln2.b").data().data(), h_.data(),
                           static_cast<float*>(nullptr), static_cast<float*>(nullptr),
                           1, d, 1e-5f);
    affine(h_.data(), m.param(p + "mlp.fc.w"), m.param(p + "mlp.fc.b"), ff_.data(), d,
           c.d_ff);
    kernels::GeluForward(ff_.data(), ff_.data(), c.d_ff);
    affine(ff_.data(), m.param(p + "mlp.proj.w"), m.param(p + "mlp.proj.b"), proj_.data(),
           c.d_ff, d);
    for (std::size_t j = 0; j < d; ++j) x_[j] += proj_[j];
  }
  kernels::LayerNormRows(x_.data(), m.param("ln_f.g").data().data(),
                         m.param("ln_f.b").data().data(), h_.data(),
                         static_cast<float*>(nullptr), static_cast<float*>(nullptr), 1, d,
                         1e-5f);
  affine(h_.data(), m.param("head.w"), m.param("head.b"), logits_.data(), d, c.vocab_size);
  ++length_;
  return logits_;
}

const char* DecodeModeName(DecodeMode mode) {
  return mode == DecodeMode::kGreedy ? "greedy" : "sampled";
}

DecodeMode ParseDecodeMode(std::string_view name) {
  if (name == "greedy") return DecodeMode::kGreedy;
  if (name == "sampled") return DecodeMode::kSampled;
  Fail(ErrorCode::kInvalidArgument, "unknown decode mode '" + std::string(name) + "'");
}

void ValidateSampling(const SamplingConfig& config) {
  Require(config.greedy || config.temperature > 0.0, ErrorCode::kInvalidArgument,
          "temperature must be > 0");
  Require(config.top_p > 0.0 && config.top_p <= 1.0, ErrorCode::kInvalidArgument,
          "top_p must lie in (0, 1]");
  Require(config.max_new >= 1, ErrorCode::kInvalidArgument, "max_new must be >= 1");
}

namespace {

bool Emittable(std::size_t id) { return id != kPadId && id != kBosId; }

}  // namespace

int ChooseToken(std::span<const float> logits, const SamplingConfig& config, Rng& rng) {
  const std::size_t v = logits.size();
  if (config.greedy) {
    std::size_t best = kEosId;
    for (std::size_t j = 0; j < v; ++j) {
      if (Emittable(j) && logits[j] > logits[best]) best = j;
    }
    return static_cast<int>(best);
  }
  std::vector<double> probs(v, 0.0);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < v; ++j) {
    if (Emittable(j)) mx = std::max(mx, logits[j] / config.temperature);
  }
  double total = 0;
  for (std::size_t j = 0; j < v; ++j) {
    if (!Emittable(j)) continue;
    probs[j] = std::exp(logits[j] / config.temperature - mx);
    total += probs[j];
  }
  std::vector<std::size_t> order;
  order.reserve(v);
  for (std::size_t j = 0; j < v; ++j) {
    if (Emittable(j)) {
      probs[j] /= total;
      order.push_back(j);
    }
  }
  std::size_t keep = order.size();
  if (config.top_p < 1.0) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
    double cum = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
      cum += probs[order[i]];
      if (cum >= config.top_p) {
        keep = i + 1;
        break;
      }
    }
  }
  double mass = 0;
  for (std::size_t i = 0; i < keep; ++i) mass += probs[order[i]];
  const double u = UniformUnit(rng) * mass;
  double cum = 0;
  for (std::size_t i = 0; i < keep; ++i) {
    cum += probs[order[i]];
    if (u < cum) return static_cast<int>(order[i]);
  }
  return static_cast<int>(order[keep - 1]);
}

namespace {

// Generates up to max_new tokens from a decoder whose last Push already
// produced the logits for the first new position.
TokenSeq Generate(IncrementalDecoder& decoder, const SamplingConfig& config, Rng& rng) {
  TokenSeq out;
  std::span<const float> logits = decoder.logits();
  for (std::size_t t = 0; t < config.max_new; ++t) {
    const int token = ChooseToken(logits, config, rng);
    out.ids.push_back(token);
    if (token == kEosId || t + 1 == config.max_new) break;
    logits = decoder.Push(token);
  }
  return out;
}

void RequireFits(const LmConfig& c, std::size_t used, std::size_t max_new) {
  Require(used + max_new <= c.context_len, ErrorCode::kContextOverflow,
          "generation of " + std::to_string(max_new) + " tokens after " +
              std::to_string(used) + " context tokens exceeds context " +
              std::to_string(c.context_len));
}

}  // namespace

std::vector<TokenSeq> Sample(const LanguageModel& model, const TokenSeq& prompt,
                             std::size_t n, const SamplingConfig& config,
                             std::uint64_t seed) {
  ValidateSampling(config);
  RequireFits(model.config(), prompt.size(), config.max_new);
  IncrementalDecoder primed(model);
  primed.Push(kBosId);
  for (int id : prompt.ids) primed.Push(id);
  std::vector<TokenSeq> out;
  out.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    IncrementalDecoder decoder = primed;
    Rng rng(DeriveSeed(seed, j));
    out.push_back(Generate(decoder, config, rng));
  }
  return out;
}

Continuation ContinueFrom(const LanguageModel& model, const TokenSeq& prompt,
                          const TokenSeq& prefix, std::size_t max_new,
                          const ContinueConfig& config) {
  Continuation out{prefix, config.mode};
  if (prefix.EndsWithEos() || max_new == 0) return out;
  SamplingConfig sampling;
  sampling.greedy = config.mode == DecodeMode::kGreedy;
  sampling.temperature = config.temperature;
  sampling.top_p = config.top_p;
  sampling.max_new = max_new;
  ValidateSampling(sampling);
  RequireFits(model.config(), prompt.size() + prefix.size(), max_new);
  IncrementalDecoder decoder(model);
  decoder.Push(kBosId);
  for (int id : prompt.ids) decoder.Push(id);
  for (int id : prefix.ids) decoder.Push(id);
  Rng rng(DeriveSeed(config.seed, 0));
  TokenSeq suffix = Generate(decoder, sampling, rng);
  out.sequence.ids.insert(out.sequence.ids.end(), suffix.ids.begin(), suffix.ids.end());
  return out;
}

}  // namespace wd
