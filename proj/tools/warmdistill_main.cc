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

// Command-line front end. Talks to the library only through the C API.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "warmdistill/c_api.h"

namespace {

int Check(wd_status status) {
  if (status != WD_OK) {
    std::fprintf(stderr, "warmdistill: %s: %s\n", wd_status_name(status), wd_last_error());
  }
  return static_cast<int>(status);
}

std::vector<const char*> CStrings(const std::vector<std::string>& items) {
  std::vector<const char*> out;
  out.reserve(items.size());
  for (const std::string& s : items) out.push_back(s.c_str());
  return out;
}

void Copy(char* dst, std::size_t cap, const std::string& src) {
  std::snprintf(dst, cap, "%s", src.c_str());
}

struct WarmupFlags {
  wd_warmup_options options;
  std::string mode;
  std::string continuation;

  WarmupFlags() {
    wd_warmup_options_default(&options);
    mode = options.mode;
    continuation = options.continuation;
  }

  void Add(CLI::App* app) {
    app->add_option("--eta", options.eta, "Detection threshold")->capture_default_str();
    app->add_option("--mode", mode, "prob_margin, teacher_rank or rank_margin")
        ->capture_default_str();
    app->add_option("--samples", options.samples_per_prompt, "Samples per prompt")
        ->capture_default_str();
    app->add_option("--temperature", options.temperature, "Student sampling temperature")
        ->capture_default_str();
    app->add_option("--top-p", options.top_p, "Student nucleus mass")->capture_default_str();
    app->add_option("--max-new", options.max_new, "Maximum generated tokens")
        ->capture_default_str();
    app->add_option("--continuation", continuation, "Teacher continuation: greedy or sampled")
        ->capture_default_str();
    app->add_option("--seed", options.seed, "Sampling seed")->capture_default_str();
  }

  const wd_warmup_options* Get() {
    Copy(options.mode, sizeof(options.mode), mode);
    Copy(options.continuation, sizeof(options.continuation), continuation);
    return &options;
  }
};

struct DecodeFlags {
  wd_sampling sampling;
  std::string decode = "greedy";

  DecodeFlags() { wd_sampling_default(&sampling); }

  void Add(CLI::App* app) {
    app->add_option("--decode", decode, "greedy or sampled")->capture_default_str();
    app->add_option("--temperature", sampling.temperature)->capture_default_str();
    app->add_option("--top-p", sampling.top_p)->capture_default_str();
    app->add_option("--max-new", sampling.max_new)->capture_default_str();
  }

  const wd_sampling* Get() {
    sampling.greedy = decode == "greedy";
    return &sampling;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Warmup distillation experiments on synthetic tasks"};
  app.set_version_flag("--version", std::string(wd_version()));
  app.require_subcommand(1);
  int rc = 0;

  // gen-corpus
  std::string task = "instruction", out;
  std::size_t size = 640;
  std::uint64_t seed = 1;
  CLI::App* gen = app.add_subcommand("gen-corpus", "Write train/valid/test JSON-lines splits");
  gen->add_option("--task", task, "instruction or math")->capture_default_str();
  gen->add_option("--size", size, "Total prompts")->capture_default_str();
  gen->add_option("--seed", seed)->capture_default_str();
  gen->add_option("--out", out, "Output directory")->required();
  gen->callback([&] { rc = Check(wd_gen_corpus(task.c_str(), size, seed, out.c_str())); });

  // train-teacher / train-student
  std::string corpus;
  wd_train_options train_opts[2];
  for (int i = 0; i < 2; ++i) {
    const char* role = i == 0 ? "teacher" : "student";
    wd_train_options_default(role, "instruction", &train_opts[i]);
    CLI::App* sub = app.add_subcommand(std::string("train-") + role,
                                       std::string("Train the ") + role + " on a corpus");
    wd_train_options& o = train_opts[i];
    sub->add_option("--corpus", corpus, "Training JSON-lines")->required();
    sub->add_option("--out", out, "Checkpoint path")->required();
    sub->add_option("--layers", o.n_layers)->capture_default_str();
    sub->add_option("--d-model", o.d_model)->capture_default_str();
    sub->add_option("--heads", o.n_heads)->capture_default_str();
    sub->add_option("--d-ff", o.d_ff)->capture_default_str();
    sub->add_option("--context", o.context_len)->capture_default_str();
    sub->add_option("--steps", o.steps)->capture_default_str();
    sub->add_option("--lr", o.learning_rate)->capture_default_str();
    sub->add_option("--batch", o.batch_size)->capture_default_str();
    sub->add_option("--warmup-steps", o.warmup_steps)->capture_default_str();
    sub->add_option("--seed", o.seed)->capture_default_str();
    sub->callback([&, role, i] {
      rc = Check(wd_train(corpus.c_str(), role, &train_opts[i], out.c_str()));
    });
  }

  // warmup
  std::string teacher, student, model, pairs, stats_out, report_out;
  WarmupFlags warm_flags;
  CLI::App* warm = app.add_subcommand("warmup", "Probe student samples and emit preference pairs");
  warm->add_option("--teacher", teacher)->required();
  warm->add_option("--student", student)->required();
  warm->add_option("--corpus", corpus)->required();
  warm->add_option("--task", task)->capture_default_str();
  warm->add_option("--pairs", pairs, "Pair file output")->required();
  warm->add_option("--stats", stats_out, "Stats JSON output")->required();
  warm_flags.Add(warm);
  warm->callback([&] {
    rc = Check(wd_warmup(teacher.c_str(), student.c_str(), corpus.c_str(), task.c_str(),
                         warm_flags.Get(), pairs.c_str(), stats_out.c_str()));
  });

  // stats
  WarmupFlags stat_flags;
  CLI::App* stats = app.add_subcommand("stats", "Detection statistics of a model vs the teacher");
  stats->add_option("--teacher", teacher)->required();
  stats->add_option("--model", model)->required();
  stats->add_option("--corpus", corpus)->required();
  stats->add_option("--task", task)->capture_default_str();
  stats->add_option("--out", stats_out)->required();
  stat_flags.Add(stats);
  stats->callback([&] {
    rc = Check(wd_stats(teacher.c_str(), model.c_str(), corpus.c_str(), task.c_str(),
                        stat_flags.Get(), stats_out.c_str()));
  });

  // align
  wd_align_options align_opts;
  wd_align_options_default(&align_opts);
  std::string variant = align_opts.variant;
  CLI::App* align = app.add_subcommand("align", "Preference-align the student on a pair file");
  align->add_option("--student", student)->required();
  align->add_option("--pairs", pairs)->required();
  align->add_option("--out", out, "Checkpoint path")->required();
  align->add_option("--report", report_out, "Report JSON path")->required();
  align->add_option("--variant", variant, "dpo, hinge or simpo")->capture_default_str();
  align->add_option("--beta", align_opts.beta)->capture_default_str();
  align->add_option("--delta", align_opts.delta)->capture_default_str();
  align->add_option("--gamma", align_opts.gamma)->capture_default_str();
  align->add_option("--epochs", align_opts.epochs)->capture_default_str();
  align->add_option("--lr", align_opts.learning_rate)->capture_default_str();
  align->add_option("--batch", align_opts.batch_size)->capture_default_str();
  align->add_option("--seed", align_opts.seed)->capture_default_str();
  align->callback([&] {
    Copy(align_opts.variant, sizeof(align_opts.variant), variant);
    rc = Check(wd_align(student.c_str(), pairs.c_str(), &align_opts, out.c_str(),
                        report_out.c_str()));
  });

  // distill
  wd_distill_options dist_opts;
  wd_distill_options_default(&dist_opts);
  std::string method = dist_opts.method;
  CLI::App* dist = app.add_subcommand("distill", "Posted distillation of a student");
  dist->add_option("--teacher", teacher)->required();
  dist->add_option("--student", student)->required();
  dist->add_option("--corpus", corpus, "Training JSON-lines")->required();
  dist->add_option("--task", task)->capture_default_str();
  dist->add_option("--out", out, "Checkpoint path")->required();
  dist->add_option("--method", method, "seqkd, skd, fkl, rkl, f_distill, skew_fkl or akl")
      ->capture_default_str();
  dist->add_option("--temperature", dist_opts.temperature)->capture_default_str();
  dist->add_option("--mix", dist_opts.mix, "Cross-entropy weight")->capture_default_str();
  dist->add_option("--skew", dist_opts.skew)->capture_default_str();
  dist->add_option("--skd-rank-cap", dist_opts.skd_rank_cap)->capture_default_str();
  dist->add_option("--steps", dist_opts.steps)->capture_default_str();
  dist->add_option("--lr", dist_opts.learning_rate)->capture_default_str();
  dist->add_option("--batch", dist_opts.batch_size)->capture_default_str();
  dist->add_option("--max-new", dist_opts.max_new)->capture_default_str();
  dist->add_option("--seed", dist_opts.seed)->capture_default_str();
  dist->callback([&] {
    Copy(dist_opts.method, sizeof(dist_opts.method), method);
    rc = Check(wd_distill(teacher.c_str(), student.c_str(), corpus.c_str(), task.c_str(),
                          &dist_opts, out.c_str()));
  });

  // eval
  DecodeFlags eval_flags;
  std::string role;
  CLI::App* eval = app.add_subcommand("eval", "Task metric of a checkpoint on a corpus");
  eval->add_option("--model", model)->required();
  eval->add_option("--corpus", corpus)->required();
  eval->add_option("--task", task)->capture_default_str();
  eval->add_option("--role", role, "Role column of the metrics row");
  eval->add_option("--out", out, "Metrics CSV path");
  eval->add_option("--seed", seed)->capture_default_str();
  eval_flags.Add(eval);
  eval->callback([&] {
    double value = 0.0;
    rc = Check(wd_eval(model.c_str(), corpus.c_str(), task.c_str(), eval_flags.Get(), seed,
                       role.empty() ? nullptr : role.c_str(), out.empty() ? nullptr : out.c_str(),
                       &value));
    if (rc == 0) std::printf("%.6f\n", value);
  });

  // plot
  std::vector<std::string> models, labels;
  CLI::App* plot = app.add_subcommand("plot", "Target-probability and spread histograms");
  plot->add_option("--corpus", corpus, "References to score")->required();
  plot->add_option("--model", models, "Checkpoint (repeatable)")->required();
  plot->add_option("--label", labels, "Label per model (repeatable)")->required();
  plot->add_option("--out", out, "Output prefix")->required();
  plot->callback([&] {
    if (models.size() != labels.size()) {
      std::fprintf(stderr, "warmdistill: need one --label per --model\n");
      rc = WD_ERR_INVALID_ARGUMENT;
      return;
    }
    const std::vector<const char*> m = CStrings(models), l = CStrings(labels);
    rc = Check(wd_plot(corpus.c_str(), m.data(), l.data(), m.size(), out.c_str()));
  });

  // report
  std::vector<std::string> manifests, baselines;
  std::string csv;
  CLI::App* rep = app.add_subcommand("report", "Seed-averaged comparison table");
  rep->add_option("--manifest", manifests, "Run manifest (repeatable)")->required();
  rep->add_option("--baseline", baselines, "Baseline manifest (repeatable)");
  rep->add_option("--csv", csv, "CSV output path");
  rep->callback([&] {
    const std::vector<const char*> m = CStrings(manifests), b = CStrings(baselines);
    std::size_t needed = 0;
    wd_status s = wd_report(m.data(), m.size(), b.data(), b.size(),
                            csv.empty() ? nullptr : csv.c_str(), nullptr, 0, &needed);
    if (s != WD_OK && needed == 0) {
      rc = Check(s);
      return;
    }
    std::string text(needed, '\0');
    rc = Check(wd_report(m.data(), m.size(), b.data(), b.size(), nullptr, text.data(),
                         text.size(), &needed));
    if (rc == 0) std::fputs(text.c_str(), stdout);
  });

  // run
  std::string config;
  std::vector<std::string> overrides;
  CLI::App* run = app.add_subcommand("run", "Full pipeline from a key = value config file");
  run->add_option("--config", config, "Config file; defaults apply when omitted");
  run->add_option("--set", overrides, "Override as key=value (repeatable)");
  run->callback([&] {
    const std::vector<const char*> o = CStrings(overrides);
    char path[4096];
    std::size_t needed = 0;
    rc = Check(wd_run(config.empty() ? nullptr : config.c_str(), o.data(), o.size(), path,
                      sizeof(path), &needed));
    if (rc == 0) std::printf("%s\n", path);
  });

  CLI11_PARSE(app, argc, argv);
  return rc;
}
