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

#include "warmdistill/pipeline.h"

#include <filesystem>
#include <set>

#include "json.hpp"
#include "warmdistill/error.h"
#include "warmdistill/io.h"
#include "warmdistill/rng.h"
#include "warmdistill/vocab.h"

namespace wd {

namespace fs = std::filesystem;

const char* TaskMetricName(Task task) {
  return task == Task::kMath ? "accuracy" : "rouge_l";
}

void GenCorpusStage(Task task, std::size_t size, std::uint64_t seed,
                    const std::string& out_dir) {
  const CorpusSplits splits = GenerateCorpus(task, size, seed);
  WriteExamples((fs::path(out_dir) / "train.jsonl").string(), splits.train);
  WriteExamples((fs::path(out_dir) / "valid.jsonl").string(), splits.valid);
  WriteExamples((fs::path(out_dir) / "test.jsonl").string(), splits.test);
}

TrainReport TrainStage(const std::string& corpus_path, const LmConfig& model,
                       const OptimConfig& optim, ModelRole role,
                       const std::string& checkpoint_out) {
  const std::vector<PromptCompletion> data = ToPromptCompletions(ReadExamples(corpus_path));
  Require(!data.empty(), ErrorCode::kInvalidArgument, "training corpus is empty");
  LanguageModel lm = InitModel(model);
  lm.set_role(role);
  const TrainReport report = Fit(lm, data.size(), MakeCrossEntropyObjective(data), optim);
  SaveCheckpoint(lm, checkpoint_out);
  return report;
}

namespace {

std::string PromptLogJsonl(const std::vector<PromptLog>& logs) {
  std::string out;
  for (const PromptLog& l : logs) {
    nlohmann::ordered_json j;
    j["id"] = l.id;
    j["samples"] = l.samples;
    j["detected"] = l.detected;
    j["accepted"] = l.accepted;
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace

WarmupResult WarmupStage(const std::string& teacher_ckpt, const std::string& student_ckpt,
                         const std::string& corpus_path, Task task,
                         const WarmupConfig& config, const std::string& pairs_out,
                         const std::string& stats_out) {
  const LanguageModel teacher = LoadCheckpoint(teacher_ckpt);
  const LanguageModel student = LoadCheckpoint(student_ckpt);
  const std::vector<Example> corpus = ReadExamples(corpus_path);
  WarmupResult result = BuildPairs(teacher, student, corpus, task, config);
  WritePairs(pairs_out, result.pairs);
  WriteTextFile(stats_out, WarmupStatsToJson(result.stats));
  WriteTextFile((fs::path(stats_out).parent_path() / "warmup_prompts.jsonl").string(),
                PromptLogJsonl(result.prompts));
  return result;
}

AlignReport AlignStage(const std::string& student_ckpt, const std::string& pairs_path,
                       const AlignConfig& config, const std::string& checkpoint_out,
                       const std::string& report_out) {
  const LanguageModel student = LoadCheckpoint(student_ckpt);
  const std::vector<PreferencePair> pairs = ReadPairs(pairs_path);
  Require(!pairs.empty(), ErrorCode::kState,
          "no preference pairs in '" + pairs_path + "'; nothing to align on");
  AlignResult result = WarmupAlign(student, pairs, config);
  SaveCheckpoint(result.model, checkpoint_out);
  WriteTextFile(report_out, AlignReportToJson(result.report));
  return result.report;
}

std::vector<Example> TeacherOutputs(const LanguageModel& teacher,
                                    const std::vector<Example>& corpus, Task task,
                                    std::size_t max_new, bool correct_only) {
  SamplingConfig greedy;
  greedy.greedy = true;
  greedy.max_new = max_new;
  std::vector<Example> all, correct;
  for (const Example& e : corpus) {
    const TokenSeq out = Sample(teacher, EncodePrompt(e.prompt), 1, greedy, 0)[0];
    Example t{e.id, e.prompt, Render(out)};
    if (TaskReward(task, t.reference, e.reference) >= 1.0) correct.push_back(t);
    all.push_back(std::move(t));
  }
  if (correct_only && !correct.empty()) return correct;
  return all;
}

DistillData BuildDistillData(const LanguageModel& teacher, const std::vector<Example>& train,
                             const ExperimentConfig& config) {
  DistillData data;
  const bool math = config.task == Task::kMath;
  data.teacher_outputs =
      TeacherOutputs(teacher, train, config.task, config.warmup.sampling.max_new, math);
  data.white_box = math ? data.teacher_outputs : train;
  return data;
}

TrainReport DistillStage(const std::string& teacher_ckpt, const std::string& student_ckpt,
                         Method method, const DistillData& data,
                         const ExperimentConfig& config, std::uint64_t seed,
                         const std::string& checkpoint_out,
                         const std::vector<std::vector<float>>* teacher_logits) {
  const LanguageModel teacher = LoadCheckpoint(teacher_ckpt);
  LanguageModel student = LoadCheckpoint(student_ckpt);
  OptimConfig optim = config.distill_optim;
  optim.seed = seed;
  Objective objective;
  std::size_t items = 0;
  if (method == Method::kSeqKd || method == Method::kSkd) {
    std::vector<PromptCompletion> seqs;
    if (method == Method::kSeqKd) {
      seqs = ToPromptCompletions(data.teacher_outputs);
    } else {
      SkdConfig skd;
      skd.rank_cap = config.skd_rank_cap;
      skd.proposal.max_new = config.warmup.sampling.max_new;
      skd.seed = seed;
      for (const Example& e : data.white_box) {
        const TokenSeq prompt = EncodePrompt(e.prompt);
        seqs.push_back({prompt, SkdRefine(teacher, student, prompt, skd).sequence});
      }
    }
    items = seqs.size();
    objective = MakeCrossEntropyObjective(std::move(seqs));
  } else {
    std::vector<PromptCompletion> seqs = ToPromptCompletions(data.white_box);
    std::vector<std::vector<float>> logits =
        teacher_logits ? *teacher_logits : TeacherForcedLogits(teacher, seqs);
    Require(logits.size() == seqs.size(), ErrorCode::kShapeMismatch,
            "teacher logits do not cover the white-box data");
    DistillConfig kd = config.distill;
    kd.kind = MethodKind(method);
    kd.skew.reset();
    if (kd.kind == DistillKind::kSkewFkl) kd.skew = config.skew_lambda;
    items = seqs.size();
    objective = MakeDistillObjective(std::move(seqs), std::move(logits), kd);
  }
  Require(items > 0, ErrorCode::kInvalidArgument, "distillation data is empty");
  const TrainReport report = Fit(student, items, objective, optim);
  SaveCheckpoint(student, checkpoint_out);
  return report;
}

double EvaluateModel(const LanguageModel& model, const std::vector<Example>& test, Task task,
                     const SamplingConfig& decoding, std::uint64_t seed) {
  Require(!test.empty(), ErrorCode::kInvalidArgument, "evaluation set is empty");
  double total = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const TokenSeq out =
        Sample(model, EncodePrompt(test[i].prompt), 1, decoding, DeriveSeed(seed, i))[0];
    total += TaskReward(task, Render(out), test[i].reference);
  }
  return total / static_cast<double>(test.size());
}

std::string ManifestToJson(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["tool_version"] = m.tool_version;
  j["config_hash"] = m.config_hash;
  j["config_path"] = m.config_path;
  j["task"] = TaskName(m.task);
  j["seeds"] = m.seeds;
  nlohmann::ordered_json stages = nlohmann::ordered_json::array();
  for (const StageRecord& s : m.stages) {
    nlohmann::ordered_json e;
    e["name"] = s.name;
    e["seed"] = s.seed;
    e["artifacts"] = s.artifacts;
    stages.push_back(e);
  }
  j["stages"] = stages;
  j["checkpoints"] = m.checkpoints;
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  for (const auto& [seed, path] : m.metrics) metrics[std::to_string(seed)] = path;
  j["metrics"] = metrics;
  return j.dump(2) + "\n";
}

RunManifest ManifestFromJson(std::string_view text) {
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    RunManifest m;
    m.tool_version = j.at("tool_version").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.config_path = j.at("config_path").get<std::string>();
    m.task = ParseTask(j.at("task").get<std::string>());
    m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    for (const nlohmann::json& s : j.at("stages")) {
      m.stages.push_back({s.at("name").get<std::string>(), s.at("seed").get<std::uint64_t>(),
                          s.at("artifacts").get<std::vector<std::string>>()});
    }
    m.checkpoints = j.at("checkpoints").get<std::map<std::string, std::string>>();
    for (const auto& [seed, path] : j.at("metrics").items()) {
      m.metrics[std::stoull(seed)] = path.get<std::string>();
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kParse, std::string("manifest: ") + e.what());
  }
}

RunManifest LoadManifest(const std::string& path) {
  return ManifestFromJson(ReadTextFile(path));
}

namespace {

std::string Join(const fs::path& dir, const std::string& name) { return (dir / name).string(); }

// Reads the artifact of a stage that was not executed in this run.
void RequireArtifact(const std::string& path, Stage producer) {
  Require(fs::exists(path), ErrorCode::kState,
          "missing '" + path + "'; enable stage '" + StageName(producer) +
              "' or provide the file");
}

class Runner {
 public:
  explicit Runner(const ExperimentConfig& config) : c_(config), root_(config.output_dir) {
    for (Stage s : config.stages) enabled_.insert(s);
  }

  RunManifest Execute() {
    fs::create_directories(root_);
    manifest_.config_hash = ConfigHash(c_);
    manifest_.config_path = Join(root_, "config.txt");
    manifest_.task = c_.task;
    manifest_.seeds = c_.seeds;
    WriteTextFile(manifest_.config_path, SerializeConfig(c_));
    const fs::path corpus = root_ / "corpus";
    train_ = Join(corpus, "train.jsonl");
    test_ = Join(corpus, "test.jsonl");
    Step(Stage::kCorpus, c_.corpus_seed, [&]() -> std::vector<std::string> {
      GenCorpusStage(c_.task, c_.corpus_size, c_.corpus_seed, corpus.string());
      return {train_, Join(corpus, "valid.jsonl"), test_};
    });
    if (c_.share_teacher) TeacherStep(root_ / "teacher", c_.teacher.seed);
    for (std::uint64_t seed : c_.seeds) RunSeed(seed);
    WriteTextFile(Join(root_, "manifest.json"), ManifestToJson(manifest_));
    return manifest_;
  }

 private:
  bool On(Stage s) const { return enabled_.count(s) > 0; }

  template <typename F>
  void Step(Stage stage, std::uint64_t seed, F&& body) {
    if (!On(stage)) return;
    try {
      std::vector<std::string> artifacts = body();
      manifest_.stages.push_back({StageName(stage), seed, std::move(artifacts)});
    } catch (const Error& e) {
      Fail(e.code(), std::string("stage '") + StageName(stage) + "' (seed " +
                         std::to_string(seed) + ") failed: " + e.what());
    }
  }

  void Checkpoint(const std::string& key, const std::string& path) {
    if (fs::exists(path)) manifest_.checkpoints[key] = path;
  }

  void TeacherStep(const fs::path& dir, std::uint64_t seed) {
    teacher_ = Join(dir, "teacher.ckpt");
    Step(Stage::kTeacher, seed, [&]() -> std::vector<std::string> {
      RequireArtifact(train_, Stage::kCorpus);
      LmConfig lm = c_.teacher;
      lm.seed = seed;
      OptimConfig optim = c_.teacher_optim;
      optim.seed = seed;
      TrainStage(train_, lm, optim, ModelRole::kTeacher, teacher_);
      return {teacher_};
    });
    Checkpoint(c_.share_teacher ? "teacher" : "seed-" + std::to_string(seed) + "/teacher",
               teacher_);
    teacher_model_.reset();
    distill_data_.reset();
    white_box_logits_.clear();
  }

  const LanguageModel& Teacher() {
    if (!teacher_model_) {
      RequireArtifact(teacher_, Stage::kTeacher);
      teacher_model_ = LoadCheckpoint(teacher_);
    }
    return *teacher_model_;
  }

  // Teacher-generated data is derived from the teacher checkpoint and cached
  // next to it.
  const DistillData& Data() {
    if (!distill_data_) {
      RequireArtifact(train_, Stage::kCorpus);
      distill_data_ = BuildDistillData(Teacher(), ReadExamples(train_), c_);
      const fs::path dir = fs::path(teacher_).parent_path();
      WriteExamples(Join(dir, "teacher_outputs.jsonl"), distill_data_->teacher_outputs);
    }
    return *distill_data_;
  }

  const std::vector<std::vector<float>>& WhiteBoxLogits() {
    if (white_box_logits_.empty()) {
      white_box_logits_ =
          TeacherForcedLogits(Teacher(), ToPromptCompletions(Data().white_box));
    }
    return white_box_logits_;
  }

  const std::vector<Example>& TeacherTestRefs() {
    if (!test_refs_) {
      RequireArtifact(test_, Stage::kCorpus);
      test_refs_ = TeacherOutputs(Teacher(), ReadExamples(test_), c_.task,
                                  c_.warmup.sampling.max_new, false);
      WriteExamples(Join(fs::path(teacher_).parent_path(), "teacher_test_refs.jsonl"),
                    *test_refs_);
    }
    return *test_refs_;
  }

  void RunSeed(std::uint64_t seed) {
    const fs::path dir = root_ / ("seed-" + std::to_string(seed));
    const std::string tag = "seed-" + std::to_string(seed) + "/";
    if (!c_.share_teacher) {
      TeacherStep(dir, seed);
      test_refs_.reset();
    }
    const std::string student = Join(dir, "student.ckpt");
    const std::string warm = Join(dir, "student_warmup.ckpt");
    const std::string pairs = Join(dir, "pairs.jsonl");
    const std::string warmup_stats = Join(dir, "warmup_stats.json");
    const std::string align_report = Join(dir, "align_report.json");

    Step(Stage::kStudent, seed, [&]() -> std::vector<std::string> {
      RequireArtifact(train_, Stage::kCorpus);
      LmConfig lm = c_.student;
      lm.seed = seed;
      OptimConfig optim = c_.student_optim;
      optim.seed = seed;
      TrainStage(train_, lm, optim, ModelRole::kStudent, student);
      return {student};
    });
    Checkpoint(tag + "student", student);

    if (c_.warmup_arm) {
      Step(Stage::kWarmup, seed, [&]() -> std::vector<std::string> {
        RequireArtifact(teacher_, Stage::kTeacher);
        RequireArtifact(student, Stage::kStudent);
        WarmupConfig wc = c_.warmup;
        wc.seed = seed;
        WarmupStage(teacher_, student, train_, c_.task, wc, pairs, warmup_stats);
        return {pairs, warmup_stats, Join(dir, "warmup_prompts.jsonl")};
      });
      Step(Stage::kAlign, seed, [&]() -> std::vector<std::string> {
        RequireArtifact(student, Stage::kStudent);
        RequireArtifact(pairs, Stage::kWarmup);
        AlignConfig ac = c_.align;
        ac.seed = seed;
        AlignStage(student, pairs, ac, warm, align_report);
        return {warm, align_report};
      });
      Checkpoint(tag + "student_warmup", warm);
    }

    std::vector<std::pair<std::string, std::string>> bases;  // role, checkpoint
    bases.emplace_back("student", student);
    if (c_.warmup_arm) bases.emplace_back("student_warmup", warm);

    Step(Stage::kStats, seed, [&]() -> std::vector<std::string> {
      RequireArtifact(test_, Stage::kCorpus);
      const std::vector<Example> test = ReadExamples(test_);
      const std::vector<PromptCompletion> refs = ToPromptCompletions(TeacherTestRefs());
      std::vector<std::string> out;
      std::vector<DistHistogram> hists;
      std::vector<std::string> labels;
      WarmupConfig wc = c_.warmup;
      wc.seed = DeriveSeed(seed, 0x73746174);
      for (const auto& [role, path] : bases) {
        RequireArtifact(path, role == "student" ? Stage::kStudent : Stage::kAlign);
        const LanguageModel model = LoadCheckpoint(path);
        const WarmupResult probe = BuildPairs(Teacher(), model, test, c_.task, wc);
        const std::string stats_path = Join(dir, "stats_" + role + ".json");
        WriteTextFile(stats_path, WarmupStatsToJson(probe.stats));
        hists.push_back(DistHistograms(model, refs));
        labels.push_back(role);
        const std::string hist_path = Join(dir, "hist_" + role + ".csv");
        WriteTextFile(hist_path, HistogramCsv(hists.back()));
        out.push_back(stats_path);
        out.push_back(hist_path);
      }
      const std::string svg = Join(dir, "hist.svg");
      WriteTextFile(svg, HistogramSvg(hists, labels));
      out.push_back(svg);
      return out;
    });

    std::vector<std::pair<std::string, std::string>> arms;  // arm, base checkpoint
    if (c_.vanilla_arm) arms.emplace_back("vanilla", student);
    if (c_.warmup_arm) arms.emplace_back("warmup", warm);
    const fs::path ddir = dir / "distill";
    Step(Stage::kDistill, seed, [&]() -> std::vector<std::string> {
      RequireArtifact(teacher_, Stage::kTeacher);
      std::vector<std::string> out;
      for (const auto& [arm, base] : arms) {
        RequireArtifact(base, arm == "vanilla" ? Stage::kStudent : Stage::kAlign);
        for (Method m : c_.methods) {
          const std::string path = Join(ddir, arm + "-" + MethodName(m) + ".ckpt");
          const bool white_box = MethodKind(m) != DistillKind::kSeqKdCe;
          DistillStage(teacher_, base, m, Data(), c_,
                       DeriveSeed(seed, 0x100 + static_cast<std::uint64_t>(m)), path,
                       white_box ? &WhiteBoxLogits() : nullptr);
          out.push_back(path);
        }
      }
      return out;
    });
    for (const auto& [arm, base] : arms) {
      for (Method m : c_.methods) {
        Checkpoint(tag + arm + "." + MethodName(m),
                   Join(ddir, arm + "-" + MethodName(m) + ".ckpt"));
      }
    }

    const std::string metrics = Join(dir, "metrics.csv");
    Step(Stage::kEval, seed, [&]() -> std::vector<std::string> {
      RequireArtifact(test_, Stage::kCorpus);
      const std::vector<Example> test = ReadExamples(test_);
      const std::string task = TaskName(c_.task);
      const std::string metric = TaskMetricName(c_.task);
      const std::uint64_t eval_seed = DeriveSeed(seed, 0x6576616c);
      std::vector<MetricRow> rows;
      rows.push_back({"teacher", task, metric,
                      EvaluateModel(Teacher(), test, c_.task, c_.eval_decoding, eval_seed)});
      for (const auto& [role, path] : bases) {
        RequireArtifact(path, role == "student" ? Stage::kStudent : Stage::kAlign);
        rows.push_back({role, task, metric,
                        EvaluateModel(LoadCheckpoint(path), test, c_.task, c_.eval_decoding,
                                      eval_seed)});
        const std::string stats_path = Join(dir, "stats_" + role + ".json");
        if (fs::exists(stats_path)) {
          const WarmupStats s = WarmupStatsFromJson(ReadTextFile(stats_path));
          rows.push_back({role, task, "R", s.r});
          rows.push_back({role, task, "All", s.all});
          rows.push_back({role, task, "Len", s.len});
          rows.push_back({role, task, "Good", s.good});
        }
      }
      for (const auto& [role, path] : bases) {
        const std::string hist_path = Join(dir, "hist_" + role + ".csv");
        if (!fs::exists(path)) continue;
        // Histogram means are recomputed from the model for full precision.
        if (fs::exists(hist_path)) {
          const DistHistogram h =
              DistHistograms(LoadCheckpoint(path), ToPromptCompletions(TeacherTestRefs()));
          rows.push_back({role, task, "target_prob_mean", h.target_prob_mean});
          rows.push_back({role, task, "nontarget_std_mean", h.nontarget_std_mean});
        }
      }
      if (c_.warmup_arm && fs::exists(align_report)) {
        const nlohmann::json j = nlohmann::json::parse(ReadTextFile(align_report));
        rows.push_back({"student_warmup", task, "implicit_accuracy",
                        j.at("implicit_accuracy").get<double>()});
        rows.push_back({"student_warmup", task, "align_final_loss",
                        j.at("final_loss").get<double>()});
        rows.push_back({"student_warmup", task, "pairs",
                        static_cast<double>(ReadPairs(pairs).size())});
      }
      for (const auto& [arm, base] : arms) {
        for (Method m : c_.methods) {
          const std::string path = Join(ddir, arm + "-" + MethodName(m) + ".ckpt");
          RequireArtifact(path, Stage::kDistill);
          rows.push_back({arm + "." + MethodName(m), task, metric,
                          EvaluateModel(LoadCheckpoint(path), test, c_.task, c_.eval_decoding,
                                        eval_seed)});
        }
      }
      WriteTextFile(metrics, MetricsCsv(rows));
      return {metrics};
    });
    if (fs::exists(metrics)) manifest_.metrics[seed] = metrics;
  }

  const ExperimentConfig& c_;
  fs::path root_;
  std::set<Stage> enabled_;
  RunManifest manifest_;
  std::string train_, test_, teacher_;
  std::optional<LanguageModel> teacher_model_;
  std::optional<DistillData> distill_data_;
  std::optional<std::vector<Example>> test_refs_;
  std::vector<std::vector<float>> white_box_logits_;
};

}  // namespace

RunManifest Run(const ExperimentConfig& config) {
  ValidateExperimentConfig(config);
  return Runner(config).Execute();
}

}  // namespace wd
