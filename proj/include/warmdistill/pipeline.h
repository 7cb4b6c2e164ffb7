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


#ifndef WARMDISTILL_PIPELINE_H_
#define WARMDISTILL_PIPELINE_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "warmdistill/align.h"
#include "warmdistill/lm.h"
#include "warmdistill/losses.h"
#include "warmdistill/metrics.h"
#include "warmdistill/tasks.h"
#include "warmdistill/warmup.h"

namespace wd {

inline constexpr char kToolVersion[] = "warmdistill 0.1.0";
inline constexpr char kSeedsEnvVar[] = "WARMDISTILL_SEEDS";

// Posted-distillation methods. f_distill uses total variation.
enum class Method { kSeqKd, kSkd, kFkl, kRkl, kFDistill, kSkewFkl, kAkl };

const char* MethodName(Method method);
Method ParseMethod(std::string_view name);
std::vector<Method> AllMethods();
// Divergence used by a white-box method; seqkd_ce for seqkd and skd.
DistillKind MethodKind(Method method);

enum class Stage { kCorpus, kTeacher, kStudent, kWarmup, kAlign, kStats, kDistill, kEval };

const char* StageName(Stage stage);
Stage ParseStage(std::string_view name);
std::vector<Stage> AllStages();

struct ExperimentConfig {
  Task task = Task::kInstruction;
  std::size_t corpus_size = 640;
  std::uint64_t corpus_seed = 1;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string output_dir = "runs/default";
  // Stages to execute. A disabled stage is not rerun; later stages read its
  // artifacts from output_dir and fail if they are missing.
  std::vector<Stage> stages = AllStages();
  // Distillation arms. Without the warmup arm, distillation starts from the
  // vanilla student only.
  bool warmup_arm = true;
  bool vanilla_arm = true;

  LmConfig teacher = TeacherConfig(1);
  OptimConfig teacher_optim;
  // One teacher per task trained from teacher.seed, reused by every seed.
  bool share_teacher = true;
  LmConfig student = StudentConfig(1);
  OptimConfig student_optim;

  WarmupConfig warmup;
  AlignConfig align;

  std::vector<Method> methods = AllMethods();
  DistillConfig distill;
  double skew_lambda = 0.1;
  std::size_t skd_rank_cap = 4;
  OptimConfig distill_optim;

  SamplingConfig eval_decoding{1.0, 1.0, true, 24};
};

// Desk-scale defaults for the given task.
ExperimentConfig DefaultExperimentConfig(Task task = Task::kInstruction);

// "key = value" lines; '#' starts a comment. Keys not present keep their
// defaults for the configured task (the task key is applied first). Unknown
// keys are kParse errors.
ExperimentConfig ParseExperimentConfig(std::string_view text);
ExperimentConfig LoadExperimentConfig(const std::string& path);
// Replaces the seed list from WARMDISTILL_SEEDS when it is set.
void ApplyEnvironmentOverrides(ExperimentConfig& config);
void ValidateExperimentConfig(const ExperimentConfig& config);

// Canonical key = value listing of every field, in a fixed order.
std::string SerializeConfig(const ExperimentConfig& config);
// FNV-1a of the canonical listing without output_dir, as 16 hex digits.
std::string ConfigHash(const ExperimentConfig& config);

// Individual stages. Each reads its inputs from files and writes outputs.

void GenCorpusStage(Task task, std::size_t size, std::uint64_t seed,
                    const std::string& out_dir);

TrainReport TrainStage(const std::string& corpus_path, const LmConfig& model,
                       const OptimConfig& optim, ModelRole role,
                       const std::string& checkpoint_out);

WarmupResult WarmupStage(const std::string& teacher_ckpt, const std::string& student_ckpt,
                         const std::string& corpus_path, Task task,
                         const WarmupConfig& config, const std::string& pairs_out,
                         const std::string& stats_out);

AlignReport AlignStage(const std::string& student_ckpt, const std::string& pairs_path,
                       const AlignConfig& config, const std::string& checkpoint_out,
                       const std::string& report_out);

// Greedy teacher outputs for every prompt of `corpus_path` as examples whose
// reference is the teacher text. With `correct_only`, outputs scoring below 1
// under the task reward are dropped (all are kept if none pass).
std::vector<Example> TeacherOutputs(const LanguageModel& teacher,
                                    const std::vector<Example>& corpus, Task task,
                                    std::size_t max_new, bool correct_only);

struct DistillData {
  // Sequence-level targets for seqkd.
  std::vector<Example> teacher_outputs;
  // White-box targets, scored with cached teacher logits.
  std::vector<Example> white_box;
};

DistillData BuildDistillData(const LanguageModel& teacher, const std::vector<Example>& train,
                             const ExperimentConfig& config);

// `teacher_logits`, when given, must be TeacherForcedLogits over
// data.white_box and saves recomputing them per method.
TrainReport DistillStage(const std::string& teacher_ckpt, const std::string& student_ckpt,
                         Method method, const DistillData& data,
                         const ExperimentConfig& config, std::uint64_t seed,
                         const std::string& checkpoint_out,
                         const std::vector<std::vector<float>>* teacher_logits = nullptr);

// Task metric of greedy (or sampled) generations on `test`.
double EvaluateModel(const LanguageModel& model, const std::vector<Example>& test, Task task,
                     const SamplingConfig& decoding, std::uint64_t seed);
const char* TaskMetricName(Task task);

struct StageRecord {
  std::string name;
  std::uint64_t seed = 0;
  std::vector<std::string> artifacts;
};

struct RunManifest {
  std::string tool_version = kToolVersion;
  std::string config_hash;
  std::string config_path;
  Task task = Task::kInstruction;
  std::vector<std::uint64_t> seeds;
  std::vector<StageRecord> stages;
  std::map<std::string, std::string> checkpoints;
  // Seed -> metrics CSV path.
  std::map<std::uint64_t, std::string> metrics;
};

std::string ManifestToJson(const RunManifest& manifest);
RunManifest ManifestFromJson(std::string_view text);
RunManifest LoadManifest(const std::string& path);

// Runs the enabled stages for every seed, writing the manifest to
// <output_dir>/manifest.json. A failing stage aborts with its name; files of
// earlier stages are left in place.
RunManifest Run(const ExperimentConfig& config);

struct ReportRow {
  std::string method;
  std::string arm;
  std::string metric;
  double value = 0.0;
  double reference = 0.0;
  double delta = 0.0;
};

struct Report {
  Task task = Task::kInstruction;
  std::vector<std::uint64_t> seeds;
  bool against_baseline = false;
  std::vector<ReportRow> rows;
};

// Seed-averaged comparison table. Without a baseline each row is the warmup
// arm (value) against the vanilla arm (reference). With a baseline each arm
// is compared with the same arm of the baseline manifests.
Report BuildReport(const std::vector<RunManifest>& runs,
                   const std::vector<RunManifest>& baseline = {});
std::string ReportCsv(const Report& report);
std::string ReportText(const Report& report);

}  // namespace wd

#endif  // WARMDISTILL_PIPELINE_H_
