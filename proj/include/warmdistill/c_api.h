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


// C interface to the warmdistill library. Every function returns a
// wd_status; on failure wd_last_error() describes the problem for the calling
// thread. Strings are UTF-8 and NUL-terminated. Output text is written into
// caller buffers: `needed` always receives the full length including the
// terminator, and WD_ERR_INVALID_ARGUMENT is returned when `capacity` is too
// small.

#ifndef WARMDISTILL_C_API_H_
#define WARMDISTILL_C_API_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define WD_API __declspec(dllexport)
#else
#define WD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum wd_status {
  WD_OK = 0,
  WD_ERR_INVALID_ARGUMENT = 1,
  WD_ERR_SHAPE_MISMATCH = 2,
  WD_ERR_NON_FINITE = 3,
  WD_ERR_CONTEXT_OVERFLOW = 4,
  WD_ERR_IO = 5,
  WD_ERR_PARSE = 6,
  WD_ERR_STATE = 7,
  WD_ERR_NOT_FOUND = 8,
  WD_ERR_INTERNAL = 9
} wd_status;

WD_API const char* wd_version(void);
WD_API const char* wd_status_name(wd_status status);
// Message of the last failed call on this thread; "" if none.
WD_API const char* wd_last_error(void);

/* Models. */

typedef struct wd_model wd_model;

typedef struct wd_model_info {
  size_t vocab_size;
  size_t context_len;
  size_t n_layers;
  size_t n_heads;
  size_t d_model;
  size_t d_ff;
  size_t num_params;
  char role[32];
} wd_model_info;

typedef struct wd_sampling {
  int greedy;
  double temperature;
  double top_p;
  size_t max_new;
} wd_sampling;

WD_API void wd_sampling_default(wd_sampling* out);

WD_API wd_status wd_model_load(const char* checkpoint, wd_model** out);
WD_API void wd_model_free(wd_model* model);
WD_API wd_status wd_model_info_get(const wd_model* model, wd_model_info* out);
// Sum of completion token log-probabilities (EOS appended to `completion`).
WD_API wd_status wd_model_score(const wd_model* model, const char* prompt,
                                const char* completion, double* total_logprob);
WD_API wd_status wd_model_generate(const wd_model* model, const char* prompt,
                                   const wd_sampling* sampling, uint64_t seed, char* buffer,
                                   size_t capacity, size_t* needed);

/* Stages. Tasks are "instruction" or "math". */

WD_API wd_status wd_gen_corpus(const char* task, size_t size, uint64_t seed,
                               const char* out_dir);

typedef struct wd_train_options {
  size_t n_layers;
  size_t d_model;
  size_t n_heads;
  size_t d_ff;
  size_t context_len;
  size_t steps;
  double learning_rate;
  size_t batch_size;
  size_t warmup_steps;
  uint64_t seed;
} wd_train_options;

// Defaults for role "teacher" or "student" on `task`.
WD_API wd_status wd_train_options_default(const char* role, const char* task,
                                          wd_train_options* out);
WD_API wd_status wd_train(const char* corpus, const char* role, const wd_train_options* options,
                          const char* checkpoint_out);

typedef struct wd_warmup_options {
  double eta;
  char mode[32];          // prob_margin, teacher_rank or rank_margin
  size_t samples_per_prompt;
  double temperature;
  double top_p;
  size_t max_new;
  char continuation[16];  // greedy or sampled
  uint64_t seed;
} wd_warmup_options;

WD_API void wd_warmup_options_default(wd_warmup_options* out);
// Writes the pair file, the stats JSON and warmup_prompts.jsonl beside it.
WD_API wd_status wd_warmup(const char* teacher, const char* student, const char* corpus,
                           const char* task, const wd_warmup_options* options,
                           const char* pairs_out, const char* stats_out);
// Probe-only statistics of `model` against `teacher` on `corpus`.
WD_API wd_status wd_stats(const char* teacher, const char* model, const char* corpus,
                          const char* task, const wd_warmup_options* options,
                          const char* stats_out);

typedef struct wd_align_options {
  char variant[16];  // dpo, hinge or simpo
  double beta;
  double delta;
  double gamma;
  size_t epochs;
  double learning_rate;
  size_t batch_size;
  uint64_t seed;
} wd_align_options;

WD_API void wd_align_options_default(wd_align_options* out);
WD_API wd_status wd_align(const char* student, const char* pairs,
                          const wd_align_options* options, const char* checkpoint_out,
                          const char* report_out);

typedef struct wd_distill_options {
  char method[16];  // seqkd, skd, fkl, rkl, f_distill, skew_fkl, akl
  double temperature;
  double mix;
  double skew;
  size_t skd_rank_cap;
  size_t steps;
  double learning_rate;
  size_t batch_size;
  size_t max_new;
  uint64_t seed;
} wd_distill_options;

WD_API void wd_distill_options_default(wd_distill_options* out);
WD_API wd_status wd_distill(const char* teacher, const char* student, const char* corpus,
                            const char* task, const wd_distill_options* options,
                            const char* checkpoint_out);

// Task metric of `model` on `corpus`. When `metrics_out` is non-NULL one
// row (role, task, metric, value) is written there as CSV.
WD_API wd_status wd_eval(const char* model, const char* corpus, const char* task,
                         const wd_sampling* decoding, uint64_t seed, const char* role,
                         const char* metrics_out, double* value);

// Histograms of each model on the references of `corpus`: writes
// <out_prefix>_<label>.csv per model and <out_prefix>.svg.
WD_API wd_status wd_plot(const char* corpus, const char* const* models,
                         const char* const* labels, size_t count, const char* out_prefix);

// Runs the experiment described by the config file (may be NULL for all
// defaults) after applying `overrides` ("key=value") and the seed environment
// override. The manifest path is copied to `buffer`; a short buffer fails the
// copy but not the completed run.
WD_API wd_status wd_run(const char* config_path, const char* const* overrides,
                        size_t override_count, char* buffer, size_t capacity, size_t* needed);

// Comparison table over manifests, optionally against baseline manifests.
// Writes CSV to csv_out (may be NULL) and the text table to `buffer`.
WD_API wd_status wd_report(const char* const* manifests, size_t count,
                           const char* const* baseline, size_t baseline_count,
                           const char* csv_out, char* buffer, size_t capacity, size_t* needed);

#ifdef __cplusplus
}  // extern "C"
#endif

#endif  // WARMDISTILL_C_API_H_
