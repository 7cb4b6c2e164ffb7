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

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "warmdistill/error.h"
#include "warmdistill/io.h"
#include "warmdistill/pipeline.h"

namespace wd {
namespace {

namespace fs = std::filesystem;

std::string TempDir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("wd_pipeline_" + name);
  fs::remove_all(p);
  return p.string();
}

std::string TinyConfigText(const std::string& out) {
  return "task = instruction\n"
         "corpus.size = 40\n"
         "seeds = 1,2\n"
         "output_dir = " + out + "\n"
         "teacher.layers = 1\n"
         "teacher.d_model = 16\n"
         "teacher.d_ff = 32\n"
         "teacher.steps = 20\n"
         "student.layers = 1\n"
         "student.d_model = 8\n"
         "student.d_ff = 16\n"
         "student.steps = 5\n"
         "warmup.samples = 2\n"
         "align.lr = 1e-3\n"
         "distill.methods = seqkd,fkl\n"
         "distill.steps = 3\n"
         "eval.max_new = 12\n";
}

TEST_CASE("pipeline: config parsing") {
  const ExperimentConfig d = DefaultExperimentConfig(Task::kMath);
  CHECK(d.task == Task::kMath);
  CHECK(d.warmup.samples_per_prompt == 8);
  CHECK(d.warmup.eta == 4.0);
  CHECK(d.distill.temperature == 2.0);
  CHECK(d.distill.mix == 0.5);
  CHECK(d.seeds.size() == 3);
  const ExperimentConfig c = ParseExperimentConfig(TinyConfigText("/tmp/x") +
                                                   "# comment line\n"
                                                   "warmup.mode = prob_margin  # inline\n"
                                                   "warmup.eta = 0.25\n"
                                                   "stages = corpus,teacher\n");
  CHECK(c.corpus_size == 40);
  CHECK(c.seeds == std::vector<std::uint64_t>{1, 2});
  CHECK(c.teacher.d_model == 16);
  CHECK(c.warmup.mode == DetectMode::kProbMargin);
  CHECK(c.warmup.eta == 0.25);
  CHECK(c.methods == std::vector<Method>{Method::kSeqKd, Method::kFkl});
  CHECK(c.stages == std::vector<Stage>{Stage::kCorpus, Stage::kTeacher});
  CHECK(ParseExperimentConfig("stages = none\n").stages.empty());
  CHECK_THROWS_AS(ParseExperimentConfig("no.such.key = 1\n"), Error);
  CHECK_THROWS_AS(ParseExperimentConfig("seeds =\n"), Error);
  CHECK_THROWS_AS(ParseExperimentConfig("corpus.size = many\n"), Error);
  CHECK_THROWS_AS(ParseExperimentConfig("corpus.size = 10\n"), Error);
  CHECK_THROWS_AS(ParseExperimentConfig("student.heads = 3\n"), Error);
  CHECK_THROWS_AS(ParseExperimentConfig("arms.warmup = false\narms.vanilla = false\n"), Error);
}

TEST_CASE("pipeline: serialization and hash") {
  const ExperimentConfig a = ParseExperimentConfig(TinyConfigText("/tmp/a"));
  const ExperimentConfig b = ParseExperimentConfig(TinyConfigText("/tmp/b"));
  const ExperimentConfig back = ParseExperimentConfig(SerializeConfig(a));
  CHECK(SerializeConfig(back) == SerializeConfig(a));
  CHECK(ConfigHash(a) == ConfigHash(b));
  CHECK(ConfigHash(a).size() == 16);
  ExperimentConfig c = a;
  c.warmup.eta = 8;
  CHECK(ConfigHash(c) != ConfigHash(a));
}

TEST_CASE("pipeline: seed override from the environment") {
  ExperimentConfig c = DefaultExperimentConfig();
  setenv(kSeedsEnvVar, "7,9", 1);
  ApplyEnvironmentOverrides(c);
  unsetenv(kSeedsEnvVar);
  CHECK(c.seeds == std::vector<std::uint64_t>{7, 9});
  ApplyEnvironmentOverrides(c);
  CHECK(c.seeds == std::vector<std::uint64_t>{7, 9});
}

TEST_CASE("pipeline: name tables") {
  for (Method m : AllMethods()) CHECK(ParseMethod(MethodName(m)) == m);
  for (Stage s : AllStages()) CHECK(ParseStage(StageName(s)) == s);
  CHECK(AllMethods().size() == 7);
  CHECK(MethodKind(Method::kFDistill) == DistillKind::kTvd);
  CHECK(MethodKind(Method::kSkd) == DistillKind::kSeqKdCe);
  CHECK_THROWS_AS(ParseMethod("gkd"), Error);
}

TEST_CASE("pipeline: gen_corpus stage") {
  const std::string a = TempDir("corpus_a"), b = TempDir("corpus_b");
  GenCorpusStage(Task::kMath, 50, 3, a);
  GenCorpusStage(Task::kMath, 50, 3, b);
  for (const char* f : {"train.jsonl", "valid.jsonl", "test.jsonl"}) {
    CHECK(ReadTextFile(a + "/" + f) == ReadTextFile(b + "/" + f));
  }
  CHECK(ReadExamples(a + "/train.jsonl").size() == 40);
  CHECK_THROWS_AS(GenCorpusStage(Task::kMath, 10, 3, a), Error);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("pipeline: no stages gives an empty manifest") {
  const std::string out = TempDir("none");
  ExperimentConfig c = ParseExperimentConfig(TinyConfigText(out) + "stages = none\n");
  const RunManifest m = Run(c);
  CHECK(m.stages.empty());
  CHECK(m.metrics.empty());
  CHECK(m.config_hash == ConfigHash(c));
  CHECK(fs::exists(out + "/manifest.json"));
  fs::remove_all(out);
}

TEST_CASE("pipeline: failing stage names itself and keeps earlier files") {
  const std::string out = TempDir("fail");
  ExperimentConfig c = ParseExperimentConfig(TinyConfigText(out) + "stages = corpus,warmup\n");
  try {
    Run(c);
    FAIL("run without a teacher succeeded");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("stage 'warmup'") != std::string::npos);
    CHECK(e.code() == ErrorCode::kState);
  }
  CHECK(fs::exists(out + "/corpus/train.jsonl"));
  fs::remove_all(out);
}

TEST_CASE("pipeline: full run, determinism and report") {
  const std::string out = TempDir("full");
  const ExperimentConfig c = ParseExperimentConfig(TinyConfigText(out));
  const RunManifest m = Run(c);
  CHECK(m.tool_version == std::string(kToolVersion));
  CHECK(m.config_hash == ConfigHash(c));
  CHECK(m.metrics.size() == 2);
  for (const StageRecord& s : m.stages) {
    for (const std::string& path : s.artifacts) CHECK_MESSAGE(fs::exists(path), path);
  }
  for (const auto& [key, path] : m.checkpoints) CHECK_MESSAGE(fs::exists(path), key);
  CHECK(m.checkpoints.count("seed-1/warmup.fkl") == 1);
  const RunManifest loaded = LoadManifest(out + "/manifest.json");
  CHECK(ManifestToJson(loaded) == ManifestToJson(m));

  const std::string csv1 = ReadTextFile(m.metrics.at(1));
  const auto rows = ParseMetricsCsv(csv1);
  auto has = [&](const std::string& role, const std::string& metric) {
    for (const MetricRow& r : rows) {
      if (r.role == role && r.metric == metric) return true;
    }
    return false;
  };
  CHECK(has("teacher", "rouge_l"));
  CHECK(has("student", "R"));
  CHECK(has("student_warmup", "target_prob_mean"));
  CHECK(has("vanilla.seqkd", "rouge_l"));
  CHECK(has("warmup.fkl", "rouge_l"));

  // Rerun into a second directory: identical metric files.
  const std::string out2 = TempDir("full2");
  const RunManifest m2 = Run(ParseExperimentConfig(TinyConfigText(out2)));
  for (std::uint64_t seed : {1, 2}) {
    CHECK(ReadTextFile(m.metrics.at(seed)) == ReadTextFile(m2.metrics.at(seed)));
  }

  const Report self = BuildReport({m}, {m});
  CHECK(self.against_baseline);
  for (const ReportRow& r : self.rows) CHECK(r.delta == 0.0);
  const Report arms = BuildReport({m});
  double v1 = 0, v2 = 0;
  for (const MetricRow& r : ParseMetricsCsv(ReadTextFile(m.metrics.at(1)))) {
    if (r.role == "warmup.seqkd") v1 = r.value;
  }
  for (const MetricRow& r : ParseMetricsCsv(ReadTextFile(m.metrics.at(2)))) {
    if (r.role == "warmup.seqkd") v2 = r.value;
  }
  bool found = false;
  for (const ReportRow& r : arms.rows) {
    if (r.method == "seqkd") {
      found = true;
      CHECK(r.value == doctest::Approx((v1 + v2) / 2));
      CHECK(r.delta == doctest::Approx(r.value - r.reference));
    }
  }
  CHECK(found);
  CHECK(ReportCsv(arms).rfind("method,arm,metric,warmup,vanilla,delta\n", 0) == 0);
  CHECK(ReportText(arms).find("seqkd") != std::string::npos);

  // Manifests with different seed lists cannot be compared.
  RunManifest other = m;
  other.seeds = {1};
  other.metrics.erase(2);
  CHECK_THROWS_AS(BuildReport({m}, {other}), Error);
  fs::remove_all(out2);
  fs::remove_all(out);
}

TEST_CASE("pipeline: vanilla-only run and missing arm") {
  const std::string out = TempDir("vanilla");
  const ExperimentConfig c =
      ParseExperimentConfig(TinyConfigText(out) + "seeds = 1\narms.warmup = false\n");
  const RunManifest m = Run(c);
  CHECK_FALSE(fs::exists(out + "/seed-1/student_warmup.ckpt"));
  CHECK(fs::exists(out + "/seed-1/distill/vanilla-seqkd.ckpt"));
  CHECK_FALSE(fs::exists(out + "/seed-1/distill/warmup-seqkd.ckpt"));
  for (const StageRecord& s : m.stages) {
    CHECK(s.name != "warmup");
    CHECK(s.name != "align");
  }
  CHECK_THROWS_AS(BuildReport({m}), Error);
  // The vanilla arm starts from the student checkpoint: with zero distill
  // steps the distilled model equals it.
  const std::string out0 = TempDir("vanilla0");
  const RunManifest z = Run(ParseExperimentConfig(
      TinyConfigText(out0) + "seeds = 1\narms.warmup = false\ndistill.steps = 0\n"
                             "distill.methods = fkl\n"));
  const auto rows = ParseMetricsCsv(ReadTextFile(z.metrics.at(1)));
  double student = -1, distilled = -2;
  for (const MetricRow& r : rows) {
    if (r.role == "student" && r.metric == "rouge_l") student = r.value;
    if (r.role == "vanilla.fkl") distilled = r.value;
  }
  CHECK(student == distilled);
  fs::remove_all(out);
  fs::remove_all(out0);
}

}  // namespace
}  // namespace wd
