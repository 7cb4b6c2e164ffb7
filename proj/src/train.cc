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
#include <numbers>
#include <numeric>

#include "warmdistill/lm.h"

namespace wd {

double ScheduledLearningRate(const OptimConfig& config, std::size_t step) {
  const double base = config.learning_rate;
  if (config.warmup_steps > 0 && step < config.warmup_steps) {
    return base * static_cast<double>(step + 1) / static_cast<double>(config.warmup_steps);
  }
  if (!config.cosine || config.steps <= config.warmup_steps + 1) return base;
  const double progress = static_cast<double>(step - config.warmup_steps) /
                          static_cast<double>(config.steps - config.warmup_steps - 1);
  const double floor = base * config.min_lr_ratio;
  return floor + (base - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

namespace {

class Adam {
 public:
  Adam(const LanguageModel& model, const OptimConfig& config) : config_(config) {
    for (const Tensor<float>& p : model.params()) {
      m_.emplace_back(p.numel(), 0.0f);
      v_.emplace_back(p.numel(), 0.0f);
    }
  }

  void Step(LanguageModel& model, double lr) {
    ++t_;
    double sq = 0.0;
    for (const Tensor<float>& p : model.params()) {
      if (!p.has_grad()) continue;
      for (float g : p.grad()) sq += static_cast<double>(g) * g;
    }
    const double norm = std::sqrt(sq);
    const double clip =
        (config_.clip_norm > 0.0 && norm > config_.clip_norm) ? config_.clip_norm / norm : 1.0;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    auto params = model.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<float>& p = params[i];
      if (!p.has_grad()) continue;
      auto w = p.mutable_data();
      auto g = p.grad();
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double gj = g[j] * clip;
        m_[i][j] = static_cast<float>(b1 * m_[i][j] + (1.0 - b1) * gj);
        v_[i][j] = static_cast<float>(b2 * v_[i][j] + (1.0 - b2) * gj * gj);
        const double update = lr * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + config_.eps);
        w[j] = static_cast<float>(w[j] - update);
      }
    }
  }

 private:
  OptimConfig config_;
  std::size_t t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

}  // namespace

TrainReport Fit(LanguageModel& model, std::size_t num_items, const Objective& objective,
                const OptimConfig& config) {
  Require(num_items > 0, ErrorCode::kInvalidArgument, "training corpus is empty");
  Require(config.learning_rate >= 0.0, ErrorCode::kInvalidArgument,
          "learning rate must be non-negative");
  Require(config.batch_size > 0, ErrorCode::kInvalidArgument, "batch size must be positive");
  TrainReport report;
  if (config.steps == 0) return report;
  const bool was_trainable = !model.params().empty() && model.params()[0].requires_grad();
  model.SetRequiresGrad(true);
  Adam adam(model, config);
  Rng rng(DeriveSeed(config.seed, 0x7472616eULL));
  std::vector<std::size_t> order(num_items);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = num_items;
  const std::size_t batch = std::min(config.batch_size, num_items);
  std::vector<std::size_t> indices(batch);
  for (std::size_t step = 0; step < config.steps; ++step) {
    for (std::size_t b = 0; b < batch; ++b) {
      if (cursor == num_items) {
        for (std::size_t i = num_items - 1; i > 0; --i) {
          std::swap(order[i], order[UniformIndex(rng, i + 1)]);
        }
        cursor = 0;
      }
      indices[b] = order[cursor++];
    }
    model.ZeroGrad();
    Tape<float> tape;
    Tensor<float> loss;
    try {
      loss = objective(tape, model, indices);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNonFinite) throw;
      Fail(ErrorCode::kNonFinite, "non-finite loss at step " + std::to_string(step) + ": " +
                                      e.what());
    }
    Require(std::isfinite(loss.item()), ErrorCode::kNonFinite,
            "non-finite loss at step " + std::to_string(step));
    tape.Backward(loss);
    adam.Step(model, ScheduledLearningRate(config, step));
    report.loss_curve.push_back(loss.item());
    ++report.steps;
  }
  model.ZeroGrad();
  model.SetRequiresGrad(was_trainable);
  return report;
}

}  // namespace wd
