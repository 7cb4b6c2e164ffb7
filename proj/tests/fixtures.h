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

// Small trained models shared by tests that need non-trivial distributions.

#ifndef WARMDISTILL_TESTS_FIXTURES_H_
#define WARMDISTILL_TESTS_FIXTURES_H_

#include <cstdint>
#include <vector>

#include "warmdistill/lm.h"
#include "warmdistill/losses.h"
#include "warmdistill/tasks.h"

namespace fixtures {

inline wd::LmConfig MiniConfig(std::size_t layers, std::size_t d_model, std::uint64_t seed) {
  wd::LmConfig c;
  c.n_layers = layers;
  c.d_model = d_model;
  c.n_heads = 2;
  c.d_ff = 2 * d_model;
  c.context_len = 64;
  c.seed = seed;
  return c;
}

inline wd::LanguageModel TrainMini(const std::vector<wd::Example>& train, std::size_t layers,
                                   std::size_t d_model, std::size_t steps,
                                   std::uint64_t seed) {
  wd::LanguageModel m = wd::InitModel(MiniConfig(layers, d_model, seed));
  wd::OptimConfig o;
  o.learning_rate = 3e-3;
  o.steps = steps;
  o.batch_size = 16;
  o.warmup_steps = 10;
  o.seed = seed;
  wd::Fit(m, train.size(), wd::MakeCrossEntropyObjective(wd::ToPromptCompletions(train)), o);
  return m;
}

struct Models {
  wd::CorpusSplits corpus;
  wd::LanguageModel teacher;
  wd::LanguageModel student;
};

// Instruction corpus with a briefly trained teacher and a weaker student.
inline const Models& InstructionModels() {
  static const Models* models = [] {
    wd::CorpusSplits corpus = wd::GenerateCorpus(wd::Task::kInstruction, 200, 5);
    wd::LanguageModel teacher = TrainMini(corpus.train, 2, 32, 400, 1);
    wd::LanguageModel student = TrainMini(corpus.train, 1, 16, 60, 2);
    teacher.set_role(wd::ModelRole::kTeacher);
    return new Models{std::move(corpus), std::move(teacher), std::move(student)};
  }();
  return *models;
}

}  // namespace fixtures

#endif  // WARMDISTILL_TESTS_FIXTURES_H_
