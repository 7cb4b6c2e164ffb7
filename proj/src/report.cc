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
#include <cstdio>
#include <map>

#include "warmdistill/error.h"
#include "warmdistill/io.h"
#include "warmdistill/pipeline.h"

namespace wd {

namespace {

// role -> metric -> value, for one seed of one manifest.
using SeedMetrics = std::map<std::string, std::map<std::string, double>>;

std::vector<SeedMetrics> LoadAll(const std::vector<RunManifest>& runs) {
  std::vector<SeedMetrics> out;
  for (const RunManifest& m : runs) {
    for (std::uint64_t seed : m.seeds) {
      const auto it = m.metrics.find(seed);
      Require(it != m.metrics.end(), ErrorCode::kNotFound,
              "manifest has no metrics for seed " + std::to_string(seed));
      SeedMetrics sm;
      for (const MetricRow& r : ParseMetricsCsv(ReadTextFile(it->second))) {
        sm[r.role][r.metric] = r.value;
      }
      out.push_back(std::move(sm));
    }
  }
  return out;
}

void CheckCompatible(const std::vector<RunManifest>& runs, Task task,
                     const std::vector<std::uint64_t>& seeds, const char* what) {
  for (const RunManifest& m : runs) {
    Require(m.task == task, ErrorCode::kInvalidArgument,
            std::string(what) + " manifests mix tasks " + TaskName(task) + " and " +
                TaskName(m.task));
    std::vector<std::uint64_t> s = m.seeds;
    std::sort(s.begin(), s.end());
    Require(s == seeds, ErrorCode::kInvalidArgument,
            std::string(what) + " manifests have mismatched seed lists");
  }
}

// Mean of role/metric over every seed; missing entries are errors.
double Mean(const std::vector<SeedMetrics>& all, const std::string& role,
            const std::string& metric) {
  double total = 0.0;
  for (const SeedMetrics& sm : all) {
    const auto r = sm.find(role);
    Require(r != sm.end(), ErrorCode::kNotFound,
            "missing arm '" + role + "' in a seed's metrics");
    const auto v = r->second.find(metric);
    Require(v != r->second.end(), ErrorCode::kNotFound,
            "metric '" + metric + "' missing for '" + role + "'");
    total += v->second;
  }
  return total / static_cast<double>(all.size());
}

bool AnyHas(const std::vector<SeedMetrics>& all, const std::string& role,
            const std::string& metric) {
  for (const SeedMetrics& sm : all) {
    const auto r = sm.find(role);
    if (r != sm.end() && r->second.count(metric)) return true;
  }
  return false;
}

std::string Format(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string Signed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%+.4f", v);
  return buf;
}

}  // namespace

Report BuildReport(const std::vector<RunManifest>& runs,
                   const std::vector<RunManifest>& baseline) {
  Require(!runs.empty(), ErrorCode::kInvalidArgument, "report needs >= 1 manifest");
  Report report;
  report.task = runs.front().task;
  report.seeds = runs.front().seeds;
  std::sort(report.seeds.begin(), report.seeds.end());
  CheckCompatible(runs, report.task, report.seeds, "run");
  CheckCompatible(baseline, report.task, report.seeds, "baseline");
  report.against_baseline = !baseline.empty();
  const std::vector<SeedMetrics> cur = LoadAll(runs);
  const std::vector<SeedMetrics> base = report.against_baseline ? LoadAll(baseline) : cur;
  const std::string metric = TaskMetricName(report.task);
  const std::vector<std::string> diag = {metric, "R", "All", "Len", "Good",
                                         "target_prob_mean", "nontarget_std_mean"};
  auto add = [&](const std::string& method, const std::string& arm, const std::string& m,
                 const std::string& role, const std::string& ref_role) {
    ReportRow row{method, arm, m, Mean(cur, role, m), Mean(base, ref_role, m), 0.0};
    row.delta = row.value - row.reference;
    report.rows.push_back(row);
  };
  if (!report.against_baseline) {
    for (const std::string& m : diag) {
      if (AnyHas(cur, "student", m) || AnyHas(cur, "student_warmup", m)) {
        add("none", "warmup", m, "student_warmup", "student");
      }
    }
    for (Method method : AllMethods()) {
      const std::string name = MethodName(method);
      const bool v = AnyHas(cur, "vanilla." + name, metric);
      const bool w = AnyHas(cur, "warmup." + name, metric);
      if (!v && !w) continue;
      add(name, "warmup", metric, "warmup." + name, "vanilla." + name);
    }
    return report;
  }
  for (const char* role : {"student", "student_warmup"}) {
    for (const std::string& m : diag) {
      if (AnyHas(cur, role, m) || AnyHas(base, role, m)) add("none", role, m, role, role);
    }
  }
  for (Method method : AllMethods()) {
    for (const char* arm : {"vanilla", "warmup"}) {
      const std::string role = std::string(arm) + "." + MethodName(method);
      if (!AnyHas(cur, role, metric) && !AnyHas(base, role, metric)) continue;
      add(MethodName(method), arm, metric, role, role);
    }
  }
  return report;
}

std::string ReportCsv(const Report& report) {
  std::string out = report.against_baseline ? "method,arm,metric,value,baseline,delta\n"
                                            : "method,arm,metric,warmup,vanilla,delta\n";
  for (const ReportRow& r : report.rows) {
    out += r.method + ',' + r.arm + ',' + r.metric + ',' + Format(r.value) + ',' +
           Format(r.reference) + ',' + Signed(r.delta) + '\n';
  }
  return out;
}

std::string ReportText(const Report& report) {
  std::string seeds;
  for (std::uint64_t s : report.seeds) seeds += (seeds.empty() ? "" : ",") + std::to_string(s);
  std::string out = std::string("task ") + TaskName(report.task) + ", seeds " + seeds +
                    ", mean over seeds\n";
  char line[160];
  std::snprintf(line, sizeof(line), "%-10s %-15s %-19s %10s %10s %9s\n", "method", "arm",
                "metric", report.against_baseline ? "value" : "warmup",
                report.against_baseline ? "baseline" : "vanilla", "delta");
  out += line;
  for (const ReportRow& r : report.rows) {
    std::snprintf(line, sizeof(line), "%-10s %-15s %-19s %10s %10s %9s\n", r.method.c_str(),
                  r.arm.c_str(), r.metric.c_str(), Format(r.value).c_str(),
                  Format(r.reference).c_str(), Signed(r.delta).c_str());
    out += line;
  }
  return out;
}

}  // namespace wd
