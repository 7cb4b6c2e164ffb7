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

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <sstream>

#include "warmdistill/error.h"
#include "warmdistill/io.h"
#include "warmdistill/pipeline.h"

namespace wd {

const char* MethodName(Method method) {
  switch (method) {
    case Method::kSeqKd: return "seqkd";
    case Method::kSkd: return "skd";
    case Method::kFkl: return "fkl";
    case Method::kRkl: return "rkl";
    case Method::kFDistill: return "f_distill";
    case Method::kSkewFkl: return "skew_fkl";
    case Method::kAkl: return "akl";
  }
  return "seqkd";
}

std::vector<Method> AllMethods() {
  return {Method::kSeqKd, Method::kSkd,     Method::kFkl, Method::kRkl,
          Method::kFDistill, Method::kSkewFkl, Method::kAkl};
}

Method ParseMethod(std::string_view name) {
  for (Method m : AllMethods()) {
    if (name == MethodName(m)) return m;
  }
  Fail(ErrorCode::kInvalidArgument, "unknown distillation method '" + std::string(name) + "'");
}

DistillKind MethodKind(Method method) {
  switch (method) {
    case Method::kFkl: return DistillKind::kFkl;
    case Method::kRkl: return DistillKind::kRkl;
    case Method::kFDistill: return DistillKind::kTvd;
    case Method::kSkewFkl: return DistillKind::kSkewFkl;
    case Method::kAkl: return DistillKind::kAkl;
    case Method::kSeqKd:
    case Method::kSkd:
      break;
  }
  return DistillKind::kSeqKdCe;
}

const char* StageName(Stage stage) {
  switch (stage) {
    case Stage::kCorpus: return "corpus";
    case Stage::kTeacher: return "teacher";
    case Stage::kStudent: return "student";
    case Stage::kWarmup: return "warmup";
    case Stage::kAlign: return "align";
    case Stage::kStats: return "stats";
    case Stage::kDistill: return "distill";
    case Stage::kEval: return "eval";
  }
  return "corpus";
}

std::vector<Stage> AllStages() {
  return {Stage::kCorpus, Stage::kTeacher, Stage::kStudent, Stage::kWarmup,
          Stage::kAlign,  Stage::kStats,   Stage::kDistill, Stage::kEval};
}

Stage ParseStage(std::string_view name) {
  for (Stage s : AllStages()) {
    if (name == StageName(s)) return s;
  }
  Fail(ErrorCode::kInvalidArgument, "unknown stage '" + std::string(name) + "'");
}

ExperimentConfig DefaultExperimentConfig(Task task) {
  ExperimentConfig c;
  c.task = task;
  const bool math = task == Task::kMath;
  c.corpus_size = math ? 1280 : 640;
  c.teacher_optim.steps = math ? 600 : 1500;
  c.teacher_optim.learning_rate = math ? 2e-3 : 1e-3;
  c.teacher_optim.warmup_steps = 50;
  c.teacher_optim.seed = 1;
  c.student_optim.steps = math ? 200 : 300;
  c.student_optim.learning_rate = 3e-3;
  c.student_optim.warmup_steps = 30;
  c.warmup.sampling.max_new = 24;
  c.align.beta = 2.0;
  c.align.learning_rate = 1e-4;
  c.distill_optim.steps = 300;
  c.distill_optim.learning_rate = 1e-3;
  return c;
}

namespace {

std::string Trim(std::string_view s) {
  const std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const std::size_t e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> SplitList(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = s.find(',', start);
    const std::string item =
        Trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::uint64_t ToUint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  Require(ec == std::errc() && ptr == v.data() + v.size(), ErrorCode::kParse,
          "config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  return out;
}

double ToDouble(const std::string& key, const std::string& v) {
  double out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  Require(ec == std::errc() && ptr == v.data() + v.size(), ErrorCode::kParse,
          "config key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

bool ToBool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  Fail(ErrorCode::kParse, "config key '" + key + "': expected true/false, got '" + v + "'");
}

std::string FromDouble(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string FromBool(bool v) { return v ? "true" : "false"; }

template <typename T, typename F>
std::string JoinNames(const std::vector<T>& items, F name) {
  std::string out;
  for (const T& item : items) {
    if (!out.empty()) out += ',';
    out += name(item);
  }
  return out;
}

struct Field {
  const char* key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define WD_UINT_FIELD(name, member)                                          \
  Field {                                                                     \
    name, [](const ExperimentConfig& c) { return std::to_string(c.member); }, \
        [](ExperimentConfig& c, const std::string& v) {                       \
          c.member = static_cast<decltype(c.member)>(ToUint(name, v));        \
        }                                                                     \
  }
#define WD_DOUBLE_FIELD(name, member)                                                   \
  Field {                                                                                \
    name, [](const ExperimentConfig& c) { return FromDouble(c.member); },                \
        [](ExperimentConfig& c, const std::string& v) { c.member = ToDouble(name, v); } \
  }
#define WD_BOOL_FIELD(name, member)                                                   \
  Field {                                                                              \
    name, [](const ExperimentConfig& c) { return FromBool(c.member); },                \
        [](ExperimentConfig& c, const std::string& v) { c.member = ToBool(name, v); } \
  }

const std::vector<Field>& Fields() {
  static const std::vector<Field> fields = {
      {"task", [](const ExperimentConfig& c) { return std::string(TaskName(c.task)); },
       [](ExperimentConfig& c, const std::string& v) { c.task = ParseTask(v); }},
      WD_UINT_FIELD("corpus.size", corpus_size),
      WD_UINT_FIELD("corpus.seed", corpus_seed),
      {"seeds",
       [](const ExperimentConfig& c) {
         return JoinNames(c.seeds, [](std::uint64_t s) { return std::to_string(s); });
       },
       [](ExperimentConfig& c, const std::string& v) {
         c.seeds.clear();
         for (const std::string& s : SplitList(v)) c.seeds.push_back(ToUint("seeds", s));
       }},
      {"output_dir", [](const ExperimentConfig& c) { return c.output_dir; },
       [](ExperimentConfig& c, const std::string& v) { c.output_dir = v; }},
      {"stages",
       [](const ExperimentConfig& c) {
         return c.stages.empty() ? std::string("none") : JoinNames(c.stages, StageName);
       },
       [](ExperimentConfig& c, const std::string& v) {
         c.stages.clear();
         if (v == "none") return;
         if (v == "all") {
           c.stages = AllStages();
           return;
         }
         for (const std::string& s : SplitList(v)) c.stages.push_back(ParseStage(s));
       }},
      WD_BOOL_FIELD("arms.warmup", warmup_arm),
      WD_BOOL_FIELD("arms.vanilla", vanilla_arm),
      WD_UINT_FIELD("teacher.layers", teacher.n_layers),
      WD_UINT_FIELD("teacher.d_model", teacher.d_model),
      WD_UINT_FIELD("teacher.heads", teacher.n_heads),
      WD_UINT_FIELD("teacher.d_ff", teacher.d_ff),
      WD_UINT_FIELD("teacher.context", teacher.context_len),
      WD_UINT_FIELD("teacher.seed", teacher.seed),
      WD_BOOL_FIELD("teacher.shared", share_teacher),
      WD_UINT_FIELD("teacher.steps", teacher_optim.steps),
      WD_DOUBLE_FIELD("teacher.lr", teacher_optim.learning_rate),
      WD_UINT_FIELD("teacher.batch", teacher_optim.batch_size),
      WD_UINT_FIELD("teacher.warmup_steps", teacher_optim.warmup_steps),
      WD_UINT_FIELD("student.layers", student.n_layers),
      WD_UINT_FIELD("student.d_model", student.d_model),
      WD_UINT_FIELD("student.heads", student.n_heads),
      WD_UINT_FIELD("student.d_ff", student.d_ff),
      WD_UINT_FIELD("student.context", student.context_len),
      WD_UINT_FIELD("student.steps", student_optim.steps),
      WD_DOUBLE_FIELD("student.lr", student_optim.learning_rate),
      WD_UINT_FIELD("student.batch", student_optim.batch_size),
      WD_UINT_FIELD("student.warmup_steps", student_optim.warmup_steps),
      WD_DOUBLE_FIELD("warmup.eta", warmup.eta),
      {"warmup.mode",
       [](const ExperimentConfig& c) { return std::string(DetectModeName(c.warmup.mode)); },
       [](ExperimentConfig& c, const std::string& v) { c.warmup.mode = ParseDetectMode(v); }},
      WD_UINT_FIELD("warmup.samples", warmup.samples_per_prompt),
      WD_DOUBLE_FIELD("warmup.temperature", warmup.sampling.temperature),
      WD_DOUBLE_FIELD("warmup.top_p", warmup.sampling.top_p),
      WD_UINT_FIELD("warmup.max_new", warmup.sampling.max_new),
      {"warmup.continuation",
       [](const ExperimentConfig& c) {
         return std::string(DecodeModeName(c.warmup.continuation.mode));
       },
       [](ExperimentConfig& c, const std::string& v) {
         c.warmup.continuation.mode = ParseDecodeMode(v);
       }},
      {"align.variant",
       [](const ExperimentConfig& c) { return std::string(AlignVariantName(c.align.variant)); },
       [](ExperimentConfig& c, const std::string& v) { c.align.variant = ParseAlignVariant(v); }},
      WD_DOUBLE_FIELD("align.beta", align.beta),
      WD_DOUBLE_FIELD("align.delta", align.delta),
      WD_DOUBLE_FIELD("align.gamma", align.gamma),
      WD_UINT_FIELD("align.epochs", align.epochs),
      WD_DOUBLE_FIELD("align.lr", align.learning_rate),
      WD_UINT_FIELD("align.batch", align.batch_size),
      {"distill.methods", [](const ExperimentConfig& c) { return JoinNames(c.methods, MethodName); },
       [](ExperimentConfig& c, const std::string& v) {
         c.methods.clear();
         for (const std::string& m : SplitList(v)) c.methods.push_back(ParseMethod(m));
       }},
      WD_DOUBLE_FIELD("distill.temperature", distill.temperature),
      WD_DOUBLE_FIELD("distill.mix", distill.mix),
      WD_DOUBLE_FIELD("distill.skew", skew_lambda),
      WD_UINT_FIELD("distill.skd_rank_cap", skd_rank_cap),
      WD_UINT_FIELD("distill.steps", distill_optim.steps),
      WD_DOUBLE_FIELD("distill.lr", distill_optim.learning_rate),
      WD_UINT_FIELD("distill.batch", distill_optim.batch_size),
      {"eval.decode",
       [](const ExperimentConfig& c) {
         return std::string(c.eval_decoding.greedy ? "greedy" : "sampled");
       },
       [](ExperimentConfig& c, const std::string& v) {
         c.eval_decoding.greedy = ParseDecodeMode(v) == DecodeMode::kGreedy;
       }},
      WD_DOUBLE_FIELD("eval.temperature", eval_decoding.temperature),
      WD_DOUBLE_FIELD("eval.top_p", eval_decoding.top_p),
      WD_UINT_FIELD("eval.max_new", eval_decoding.max_new),
  };
  return fields;
}

#undef WD_UINT_FIELD
#undef WD_DOUBLE_FIELD
#undef WD_BOOL_FIELD

}  // namespace

ExperimentConfig ParseExperimentConfig(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::istringstream in{std::string(text)};
  std::size_t line_no = 0;
  std::string task = "instruction";
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string trimmed = Trim(line);
    if (trimmed.empty()) continue;
    const std::size_t eq = trimmed.find('=');
    Require(eq != std::string::npos, ErrorCode::kParse,
            "config line " + std::to_string(line_no) + ": expected key = value");
    std::string key = Trim(trimmed.substr(0, eq));
    std::string value = Trim(trimmed.substr(eq + 1));
    if (key == "task") task = value;
    entries.emplace_back(std::move(key), std::move(value));
  }
  ExperimentConfig config = DefaultExperimentConfig(ParseTask(task));
  for (const auto& [key, value] : entries) {
    bool known = false;
    for (const Field& f : Fields()) {
      if (key == f.key) {
        f.set(config, value);
        known = true;
        break;
      }
    }
    Require(known, ErrorCode::kParse, "unknown config key '" + key + "'");
  }
  ValidateExperimentConfig(config);
  return config;
}

ExperimentConfig LoadExperimentConfig(const std::string& path) {
  return ParseExperimentConfig(ReadTextFile(path));
}

void ApplyEnvironmentOverrides(ExperimentConfig& config) {
  const char* env = std::getenv(kSeedsEnvVar);
  if (env == nullptr || *env == '\0') return;
  config.seeds.clear();
  for (const std::string& s : SplitList(env)) config.seeds.push_back(ToUint(kSeedsEnvVar, s));
  ValidateExperimentConfig(config);
}

void ValidateExperimentConfig(const ExperimentConfig& c) {
  Require(!c.seeds.empty(), ErrorCode::kInvalidArgument, "seed list must be non-empty");
  Require(c.corpus_size >= 30, ErrorCode::kInvalidArgument, "corpus.size must be >= 30");
  Require(c.warmup_arm || c.vanilla_arm, ErrorCode::kInvalidArgument,
          "at least one distillation arm must be enabled");
  Require(!c.output_dir.empty(), ErrorCode::kInvalidArgument, "output_dir must be set");
  ValidateConfig(c.teacher);
  ValidateConfig(c.student);
  Require(c.teacher.vocab_size == c.student.vocab_size, ErrorCode::kInvalidArgument,
          "teacher and student vocabularies differ");
  ValidateWarmupConfig(c.warmup);
  ValidateAlignConfig(c.align);
  ValidateSampling(c.eval_decoding);
  Require(c.skew_lambda >= 0.0 && c.skew_lambda <= 1.0, ErrorCode::kInvalidArgument,
          "distill.skew must lie in [0, 1]");
  Require(c.skd_rank_cap >= 1, ErrorCode::kInvalidArgument, "distill.skd_rank_cap must be >= 1");
  DistillConfig probe = c.distill;
  probe.kind = DistillKind::kFkl;
  probe.skew.reset();
  ValidateDistillConfig(probe);
}

std::string SerializeConfig(const ExperimentConfig& config) {
  std::string out;
  for (const Field& f : Fields()) {
    out += f.key;
    out += " = ";
    out += f.get(config);
    out += '\n';
  }
  return out;
}

std::string ConfigHash(const ExperimentConfig& config) {
  ExperimentConfig copy = config;
  copy.output_dir = "-";
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : SerializeConfig(copy)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace wd
