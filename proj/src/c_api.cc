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

#include "warmdistill/c_api.h"

#include <cstring>
#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#include "warmdistill/align.h"
#include "warmdistill/error.h"
#include "warmdistill/io.h"
#include "warmdistill/lm.h"
#include "warmdistill/metrics.h"
#include "warmdistill/pipeline.h"
#include "warmdistill/tasks.h"
#include "warmdistill/vocab.h"
#include "warmdistill/warmup.h"

struct wd_model {
  wd::LanguageModel model;
};

namespace {

thread_local std::string last_error;

wd_status ToStatus(wd::ErrorCode code) {
  switch (code) {
    case wd::ErrorCode::kOk: return WD_OK;
    case wd::ErrorCode::kInvalidArgument: return WD_ERR_INVALID_ARGUMENT;
    case wd::ErrorCode::kShapeMismatch: return WD_ERR_SHAPE_MISMATCH;
    case wd::ErrorCode::kNonFinite: return WD_ERR_NON_FINITE;
    case wd::ErrorCode::kContextOverflow: return WD_ERR_CONTEXT_OVERFLOW;
    case wd::ErrorCode::kIo: return WD_ERR_IO;
    case wd::ErrorCode::kParse: return WD_ERR_PARSE;
    case wd::ErrorCode::kState: return WD_ERR_STATE;
    case wd::ErrorCode::kNotFound: return WD_ERR_NOT_FOUND;
    case wd::ErrorCode::kInternal: return WD_ERR_INTERNAL;
  }
  return WD_ERR_INTERNAL;
}

template <typename F>
wd_status Guard(F&& body) {
  try {
    body();
    last_error.clear();
    return WD_OK;
  } catch (const wd::Error& e) {
    last_error = e.what();
    return ToStatus(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return WD_ERR_INTERNAL;
  } catch (const std::filesystem::filesystem_error& e) {
    last_error = e.what();
    return WD_ERR_IO;
  } catch (const std::exception& e) {
    last_error = e.what();
    return WD_ERR_INTERNAL;
  }
}

void NotNull(const void* p, const char* what) {
  wd::Require(p != nullptr, wd::ErrorCode::kInvalidArgument, std::string(what) + " is NULL");
}

void CopyOut(const std::string& text, char* buffer, size_t capacity, size_t* needed) {
  if (needed) *needed = text.size() + 1;
  wd::Require(buffer != nullptr && capacity > text.size(), wd::ErrorCode::kInvalidArgument,
              "output buffer too small: need " + std::to_string(text.size() + 1) + " bytes");
  std::memcpy(buffer, text.c_str(), text.size() + 1);
}

void CopyName(char* dst, size_t cap, const char* src) {
  std::strncpy(dst, src, cap - 1);
  dst[cap - 1] = '\0';
}

wd::SamplingConfig ToSampling(const wd_sampling* s) {
  wd::SamplingConfig c;
  if (s) {
    c.greedy = s->greedy != 0;
    c.temperature = s->temperature;
    c.top_p = s->top_p;
    c.max_new = s->max_new;
  }
  wd::ValidateSampling(c);
  return c;
}

wd::WarmupConfig ToWarmup(const wd_warmup_options* o) {
  NotNull(o, "warmup options");
  wd::WarmupConfig c;
  c.eta = o->eta;
  c.mode = wd::ParseDetectMode(o->mode);
  c.samples_per_prompt = o->samples_per_prompt;
  c.sampling.temperature = o->temperature;
  c.sampling.top_p = o->top_p;
  c.sampling.max_new = o->max_new;
  c.continuation.mode = wd::ParseDecodeMode(o->continuation);
  c.seed = o->seed;
  wd::ValidateWarmupConfig(c);
  return c;
}

}  // namespace

extern "C" {

const char* wd_version(void) { return wd::kToolVersion; }

const char* wd_status_name(wd_status status) {
  switch (status) {
    case WD_OK: return "ok";
    case WD_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case WD_ERR_SHAPE_MISMATCH: return "shape_mismatch";
    case WD_ERR_NON_FINITE: return "non_finite";
    case WD_ERR_CONTEXT_OVERFLOW: return "context_overflow";
    case WD_ERR_IO: return "io";
    case WD_ERR_PARSE: return "parse";
    case WD_ERR_STATE: return "state";
    case WD_ERR_NOT_FOUND: return "not_found";
    case WD_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* wd_last_error(void) { return last_error.c_str(); }

void wd_sampling_default(wd_sampling* out) {
  if (!out) return;
  out->greedy = 1;
  out->temperature = 1.0;
  out->top_p = 1.0;
  out->max_new = 24;
}

wd_status wd_model_load(const char* checkpoint, wd_model** out) {
  return Guard([&] {
    NotNull(checkpoint, "checkpoint");
    NotNull(out, "out");
    *out = nullptr;
    *out = new wd_model{wd::LoadCheckpoint(checkpoint)};
  });
}

void wd_model_free(wd_model* model) { delete model; }

wd_status wd_model_info_get(const wd_model* model, wd_model_info* out) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(out, "out");
    const wd::LmConfig& c = model->model.config();
    out->vocab_size = c.vocab_size;
    out->context_len = c.context_len;
    out->n_layers = c.n_layers;
    out->n_heads = c.n_heads;
    out->d_model = c.d_model;
    out->d_ff = c.d_ff;
    out->num_params = model->model.manifest().total;
    CopyName(out->role, sizeof(out->role), wd::RoleName(model->model.role()));
  });
}

wd_status wd_model_score(const wd_model* model, const char* prompt, const char* completion,
                         double* total_logprob) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(prompt, "prompt");
    NotNull(completion, "completion");
    NotNull(total_logprob, "total_logprob");
    double total = 0.0;
    for (double v : wd::TokenLogprobs(model->model, wd::EncodePrompt(prompt),
                                      wd::EncodeCompletion(completion))) {
      total += v;
    }
    *total_logprob = total;
  });
}

wd_status wd_model_generate(const wd_model* model, const char* prompt,
                            const wd_sampling* sampling, uint64_t seed, char* buffer,
                            size_t capacity, size_t* needed) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(prompt, "prompt");
    const std::vector<wd::TokenSeq> out =
        wd::Sample(model->model, wd::EncodePrompt(prompt), 1, ToSampling(sampling), seed);
    CopyOut(wd::Render(out.front()), buffer, capacity, needed);
  });
}

wd_status wd_gen_corpus(const char* task, size_t size, uint64_t seed, const char* out_dir) {
  return Guard([&] {
    NotNull(task, "task");
    NotNull(out_dir, "out_dir");
    wd::GenCorpusStage(wd::ParseTask(task), size, seed, out_dir);
  });
}

wd_status wd_train_options_default(const char* role, const char* task, wd_train_options* out) {
  return Guard([&] {
    NotNull(role, "role");
    NotNull(task, "task");
    NotNull(out, "out");
    const wd::ExperimentConfig c = wd::DefaultExperimentConfig(wd::ParseTask(task));
    const wd::ModelRole r = wd::ParseRole(role);
    wd::Require(r == wd::ModelRole::kTeacher || r == wd::ModelRole::kStudent,
                wd::ErrorCode::kInvalidArgument, "role must be teacher or student");
    const bool teacher = r == wd::ModelRole::kTeacher;
    const wd::LmConfig& lm = teacher ? c.teacher : c.student;
    const wd::OptimConfig& o = teacher ? c.teacher_optim : c.student_optim;
    out->n_layers = lm.n_layers;
    out->d_model = lm.d_model;
    out->n_heads = lm.n_heads;
    out->d_ff = lm.d_ff;
    out->context_len = lm.context_len;
    out->steps = o.steps;
    out->learning_rate = o.learning_rate;
    out->batch_size = o.batch_size;
    out->warmup_steps = o.warmup_steps;
    out->seed = 1;
  });
}

wd_status wd_train(const char* corpus, const char* role, const wd_train_options* options,
                   const char* checkpoint_out) {
  return Guard([&] {
    NotNull(corpus, "corpus");
    NotNull(role, "role");
    NotNull(options, "options");
    NotNull(checkpoint_out, "checkpoint_out");
    wd::LmConfig lm;
    lm.n_layers = options->n_layers;
    lm.d_model = options->d_model;
    lm.n_heads = options->n_heads;
    lm.d_ff = options->d_ff;
    lm.context_len = options->context_len;
    lm.seed = options->seed;
    wd::ValidateConfig(lm);
    wd::OptimConfig o;
    o.steps = options->steps;
    o.learning_rate = options->learning_rate;
    o.batch_size = options->batch_size;
    o.warmup_steps = options->warmup_steps;
    o.seed = options->seed;
    wd::TrainStage(corpus, lm, o, wd::ParseRole(role), checkpoint_out);
  });
}

void wd_warmup_options_default(wd_warmup_options* out) {
  if (!out) return;
  const wd::WarmupConfig c = wd::DefaultExperimentConfig().warmup;
  out->eta = c.eta;
  CopyName(out->mode, sizeof(out->mode), wd::DetectModeName(c.mode));
  out->samples_per_prompt = c.samples_per_prompt;
  out->temperature = c.sampling.temperature;
  out->top_p = c.sampling.top_p;
  out->max_new = c.sampling.max_new;
  CopyName(out->continuation, sizeof(out->continuation),
           wd::DecodeModeName(c.continuation.mode));
  out->seed = 1;
}

wd_status wd_warmup(const char* teacher, const char* student, const char* corpus,
                    const char* task, const wd_warmup_options* options, const char* pairs_out,
                    const char* stats_out) {
  return Guard([&] {
    for (const char* p : {teacher, student, corpus, task, pairs_out, stats_out}) {
      NotNull(p, "path argument");
    }
    wd::WarmupStage(teacher, student, corpus, wd::ParseTask(task), ToWarmup(options),
                    pairs_out, stats_out);
  });
}

wd_status wd_stats(const char* teacher, const char* model, const char* corpus, const char* task,
                   const wd_warmup_options* options, const char* stats_out) {
  return Guard([&] {
    for (const char* p : {teacher, model, corpus, task, stats_out}) NotNull(p, "path argument");
    const wd::WarmupResult r =
        wd::BuildPairs(wd::LoadCheckpoint(teacher), wd::LoadCheckpoint(model),
                       wd::ReadExamples(corpus), wd::ParseTask(task), ToWarmup(options));
    wd::WriteTextFile(stats_out, wd::WarmupStatsToJson(r.stats));
  });
}

void wd_align_options_default(wd_align_options* out) {
  if (!out) return;
  const wd::AlignConfig c = wd::DefaultExperimentConfig().align;
  CopyName(out->variant, sizeof(out->variant), wd::AlignVariantName(c.variant));
  out->beta = c.beta;
  out->delta = c.delta;
  out->gamma = c.gamma;
  out->epochs = c.epochs;
  out->learning_rate = c.learning_rate;
  out->batch_size = c.batch_size;
  out->seed = 1;
}

wd_status wd_align(const char* student, const char* pairs, const wd_align_options* options,
                   const char* checkpoint_out, const char* report_out) {
  return Guard([&] {
    for (const char* p : {student, pairs, checkpoint_out, report_out}) {
      NotNull(p, "path argument");
    }
    NotNull(options, "options");
    wd::AlignConfig c;
    c.variant = wd::ParseAlignVariant(options->variant);
    c.beta = options->beta;
    c.delta = options->delta;
    c.gamma = options->gamma;
    c.epochs = options->epochs;
    c.learning_rate = options->learning_rate;
    c.batch_size = options->batch_size;
    c.seed = options->seed;
    wd::AlignStage(student, pairs, c, checkpoint_out, report_out);
  });
}

void wd_distill_options_default(wd_distill_options* out) {
  if (!out) return;
  const wd::ExperimentConfig c = wd::DefaultExperimentConfig();
  CopyName(out->method, sizeof(out->method), "seqkd");
  out->temperature = c.distill.temperature;
  out->mix = c.distill.mix;
  out->skew = c.skew_lambda;
  out->skd_rank_cap = c.skd_rank_cap;
  out->steps = c.distill_optim.steps;
  out->learning_rate = c.distill_optim.learning_rate;
  out->batch_size = c.distill_optim.batch_size;
  out->max_new = c.warmup.sampling.max_new;
  out->seed = 1;
}

wd_status wd_distill(const char* teacher, const char* student, const char* corpus,
                     const char* task, const wd_distill_options* options,
                     const char* checkpoint_out) {
  return Guard([&] {
    for (const char* p : {teacher, student, corpus, task, checkpoint_out}) {
      NotNull(p, "path argument");
    }
    NotNull(options, "options");
    wd::ExperimentConfig c = wd::DefaultExperimentConfig(wd::ParseTask(task));
    c.distill.temperature = options->temperature;
    c.distill.mix = options->mix;
    c.skew_lambda = options->skew;
    c.skd_rank_cap = options->skd_rank_cap;
    c.distill_optim.steps = options->steps;
    c.distill_optim.learning_rate = options->learning_rate;
    c.distill_optim.batch_size = options->batch_size;
    c.warmup.sampling.max_new = options->max_new;
    wd::ValidateExperimentConfig(c);
    const wd::DistillData data =
        wd::BuildDistillData(wd::LoadCheckpoint(teacher), wd::ReadExamples(corpus), c);
    wd::DistillStage(teacher, student, wd::ParseMethod(options->method), data, c,
                     options->seed, checkpoint_out);
  });
}

wd_status wd_eval(const char* model, const char* corpus, const char* task,
                  const wd_sampling* decoding, uint64_t seed, const char* role,
                  const char* metrics_out, double* value) {
  return Guard([&] {
    for (const char* p : {model, corpus, task}) NotNull(p, "path argument");
    const wd::Task t = wd::ParseTask(task);
    const wd::LanguageModel m = wd::LoadCheckpoint(model);
    const double v = wd::EvaluateModel(m, wd::ReadExamples(corpus), t, ToSampling(decoding), seed);
    if (value) *value = v;
    if (metrics_out) {
      const std::vector<wd::MetricRow> rows{
          {role ? role : wd::RoleName(m.role()), wd::TaskName(t), wd::TaskMetricName(t), v}};
      wd::WriteTextFile(metrics_out, wd::MetricsCsv(rows));
    }
  });
}

wd_status wd_plot(const char* corpus, const char* const* models, const char* const* labels,
                  size_t count, const char* out_prefix) {
  return Guard([&] {
    NotNull(corpus, "corpus");
    NotNull(out_prefix, "out_prefix");
    wd::Require(count > 0 && models && labels, wd::ErrorCode::kInvalidArgument,
                "plot needs at least one model and label");
    const std::vector<wd::PromptCompletion> refs =
        wd::ToPromptCompletions(wd::ReadExamples(corpus));
    std::vector<wd::DistHistogram> hists;
    std::vector<std::string> names;
    for (size_t i = 0; i < count; ++i) {
      NotNull(models[i], "model path");
      NotNull(labels[i], "label");
      hists.push_back(wd::DistHistograms(wd::LoadCheckpoint(models[i]), refs));
      names.emplace_back(labels[i]);
      wd::WriteTextFile(std::string(out_prefix) + "_" + labels[i] + ".csv",
                        wd::HistogramCsv(hists.back()));
    }
    wd::WriteTextFile(std::string(out_prefix) + ".svg", wd::HistogramSvg(hists, names));
  });
}

wd_status wd_run(const char* config_path, const char* const* overrides, size_t override_count,
                 char* buffer, size_t capacity, size_t* needed) {
  return Guard([&] {
    std::string text = config_path ? wd::ReadTextFile(config_path) : std::string();
    text += '\n';
    for (size_t i = 0; i < override_count; ++i) {
      NotNull(overrides[i], "override");
      const std::string o = overrides[i];
      wd::Require(o.find('=') != std::string::npos, wd::ErrorCode::kInvalidArgument,
                  "override '" + o + "' is not key=value");
      text += o;
      text += '\n';
    }
    wd::ExperimentConfig c = wd::ParseExperimentConfig(text);
    wd::ApplyEnvironmentOverrides(c);
    wd::Run(c);
    CopyOut((std::filesystem::path(c.output_dir) / "manifest.json").string(), buffer, capacity,
            needed);
  });
}

wd_status wd_report(const char* const* manifests, size_t count, const char* const* baseline,
                    size_t baseline_count, const char* csv_out, char* buffer, size_t capacity,
                    size_t* needed) {
  return Guard([&] {
    wd::Require(count > 0 && manifests, wd::ErrorCode::kInvalidArgument,
                "report needs at least one manifest");
    std::vector<wd::RunManifest> runs, base;
    for (size_t i = 0; i < count; ++i) {
      NotNull(manifests[i], "manifest path");
      runs.push_back(wd::LoadManifest(manifests[i]));
    }
    for (size_t i = 0; i < baseline_count; ++i) {
      NotNull(baseline[i], "baseline path");
      base.push_back(wd::LoadManifest(baseline[i]));
    }
    const wd::Report report = wd::BuildReport(runs, base);
    if (csv_out) wd::WriteTextFile(csv_out, wd::ReportCsv(report));
    CopyOut(wd::ReportText(report), buffer, capacity, needed);
  });
}

}  // extern "C"
