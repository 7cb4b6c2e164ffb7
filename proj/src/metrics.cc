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

#include "warmdistill/metrics.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "warmdistill/error.h"

namespace wd {

std::size_t LcsLength(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeScore RougeL(std::span<const std::string> candidate,
                  std::span<const std::string> reference) {
  RougeScore s;
  if (candidate.empty() || reference.empty()) return s;
  const double lcs = static_cast<double>(LcsLength(candidate, reference));
  s.precision = lcs / static_cast<double>(candidate.size());
  s.recall = lcs / static_cast<double>(reference.size());
  if (s.precision + s.recall > 0.0) {
    s.f = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  }
  return s;
}

RougeScore RougeL(std::string_view candidate, std::string_view reference) {
  const std::vector<std::string> c = SplitWords(candidate);
  const std::vector<std::string> r = SplitWords(reference);
  return RougeL(std::span<const std::string>(c), std::span<const std::string>(r));
}

std::vector<std::string> SplitWords(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string NormalizeAnswer(std::string_view answer) {
  std::string out;
  for (const std::string& w : SplitWords(answer)) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::optional<std::string> ExtractAnswer(std::string_view text) {
  const std::size_t pos = text.rfind('#');
  if (pos == std::string_view::npos) return std::nullopt;
  return std::string(text.substr(pos + 1));
}

int AnswersMatch(std::string_view candidate, std::string_view reference) {
  return NormalizeAnswer(candidate) == NormalizeAnswer(reference) ? 1 : 0;
}

MatchResult ExactMatch(std::string_view candidate, std::string_view reference) {
  const std::optional<std::string> ref = ExtractAnswer(reference);
  Require(ref.has_value(), ErrorCode::kInvalidArgument,
          "reference '" + std::string(reference) + "' has no answer delimiter");
  const std::optional<std::string> cand = ExtractAnswer(candidate);
  if (!cand) return {0, true};
  return {AnswersMatch(*cand, *ref), false};
}

WarmupStats ComputeWarmupStats(std::span<const SequenceOutcome> outcomes) {
  Require(!outcomes.empty(), ErrorCode::kInvalidArgument, "warmup stats need >= 1 sequence");
  WarmupStats s;
  double r_sum = 0.0, len_sum = 0.0;
  std::size_t all = 0;
  for (const SequenceOutcome& o : outcomes) {
    Require(o.length > 0 && o.passing <= o.length, ErrorCode::kInvalidArgument,
            "sequence outcome needs length > 0 and passing <= length");
    r_sum += static_cast<double>(o.passing) / static_cast<double>(o.length);
    all += o.passing == o.length;
    len_sum += static_cast<double>(o.length);
    if (o.improved.has_value()) {
      ++s.refined;
      s.improved += *o.improved;
    }
  }
  const double n = static_cast<double>(outcomes.size());
  s.sequences = outcomes.size();
  s.r = r_sum / n;
  s.all = static_cast<double>(all) / n;
  s.len = len_sum / n;
  s.good = s.refined ? static_cast<double>(s.improved) / static_cast<double>(s.refined) : 0.0;
  return s;
}

std::string WarmupStatsToJson(const WarmupStats& s) {
  nlohmann::ordered_json j;
  j["R"] = s.r;
  j["All"] = s.all;
  j["Len"] = s.len;
  j["Good"] = s.good;
  j["sequences"] = s.sequences;
  j["refined"] = s.refined;
  j["improved"] = s.improved;
  return j.dump(2) + "\n";
}

WarmupStats WarmupStatsFromJson(std::string_view text) {
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    WarmupStats s;
    s.r = j.at("R").get<double>();
    s.all = j.at("All").get<double>();
    s.len = j.at("Len").get<double>();
    s.good = j.at("Good").get<double>();
    s.sequences = j.at("sequences").get<std::size_t>();
    s.refined = j.at("refined").get<std::size_t>();
    s.improved = j.at("improved").get<std::size_t>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kParse, std::string("warmup stats: ") + e.what());
  }
}

double NonTargetStd(std::span<const double> probs, std::size_t target) {
  Require(target < probs.size() && probs.size() >= 2, ErrorCode::kInvalidArgument,
          "non-target std needs vocab >= 2 and a valid target");
  const double n = static_cast<double>(probs.size() - 1);
  double mean = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (k != target) mean += probs[k];
  }
  mean /= n;
  double var = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (k != target) var += (probs[k] - mean) * (probs[k] - mean);
  }
  return std::sqrt(var / n);
}

namespace {

std::size_t BinOf(double x, double hi) {
  const double b = std::floor(x / hi * static_cast<double>(kHistogramBins));
  if (!(b > 0.0)) return 0;
  return std::min(kHistogramBins - 1, static_cast<std::size_t>(b));
}

}  // namespace

DistHistogram HistogramFromRows(std::span<const double> probs, std::size_t vocab,
                                std::span<const int> targets) {
  Require(vocab >= 2 && probs.size() == targets.size() * vocab, ErrorCode::kShapeMismatch,
          "histogram rows do not match targets x vocab");
  Require(!targets.empty(), ErrorCode::kInvalidArgument, "histogram needs >= 1 position");
  DistHistogram h;
  h.target_prob_counts.assign(kHistogramBins, 0);
  h.nontarget_std_counts.assign(kHistogramBins, 0);
  double tsum = 0.0, ssum = 0.0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    const std::span<const double> row = probs.subspan(r * vocab, vocab);
    const std::size_t t = static_cast<std::size_t>(targets[r]);
    const double tp = row[t];
    const double sd = NonTargetStd(row, t);
    ++h.target_prob_counts[BinOf(tp, 1.0)];
    ++h.nontarget_std_counts[BinOf(sd, kStdAxisMax)];
    tsum += tp;
    ssum += sd;
  }
  h.positions = targets.size();
  h.target_prob_mean = tsum / static_cast<double>(h.positions);
  h.nontarget_std_mean = ssum / static_cast<double>(h.positions);
  return h;
}

DistHistogram DistHistograms(const LanguageModel& model,
                             std::span<const PromptCompletion> corpus) {
  Require(!corpus.empty(), ErrorCode::kInvalidArgument, "histograms need a non-empty corpus");
  const std::vector<std::vector<float>> logits = TeacherForcedLogits(model, corpus);
  const std::size_t v = model.config().vocab_size;
  std::vector<double> probs;
  std::vector<int> targets;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const std::vector<int>& ids = corpus[i].completion.ids;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const float* row = logits[i].data() + k * v;
      const double mx = *std::max_element(row, row + v);
      double z = 0.0;
      const std::size_t base = probs.size();
      for (std::size_t j = 0; j < v; ++j) {
        probs.push_back(std::exp(static_cast<double>(row[j]) - mx));
        z += probs.back();
      }
      for (std::size_t j = 0; j < v; ++j) probs[base + j] /= z;
      targets.push_back(ids[k]);
    }
  }
  return HistogramFromRows(probs, v, targets);
}

std::string HistogramCsv(const DistHistogram& h) {
  std::string out = "series,bin_left,bin_right,count\n";
  char line[96];
  auto emit = [&](const char* series, const std::vector<std::size_t>& counts, double hi) {
    for (std::size_t b = 0; b < counts.size(); ++b) {
      const double w = hi / static_cast<double>(counts.size());
      std::snprintf(line, sizeof(line), "%s,%.4f,%.4f,%zu\n", series, w * b, w * (b + 1),
                    counts[b]);
      out += line;
    }
  };
  emit("target_prob", h.target_prob_counts, 1.0);
  emit("nontarget_std", h.nontarget_std_counts, kStdAxisMax);
  return out;
}

std::string HistogramSvg(std::span<const DistHistogram> hists,
                         std::span<const std::string> labels) {
  Require(hists.size() == labels.size() && !hists.empty(), ErrorCode::kInvalidArgument,
          "svg needs one label per histogram");
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  constexpr double kPanelW = 360, kPanelH = 220, kPad = 40;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 2 * kPanelW + 3 * kPad
      << "\" height=\"" << kPanelH + 3 * kPad << "\" font-family=\"sans-serif\" "
      << "font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int panel = 0; panel < 2; ++panel) {
    const double x0 = kPad + panel * (kPanelW + kPad);
    const double y0 = kPad;
    double peak = 0.0;
    for (const DistHistogram& h : hists) {
      const auto& c = panel == 0 ? h.target_prob_counts : h.nontarget_std_counts;
      for (std::size_t v : c) {
        peak = std::max(peak, static_cast<double>(v) / static_cast<double>(h.positions));
      }
    }
    if (peak <= 0.0) peak = 1.0;
    svg << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << kPanelW
        << "\" height=\"" << kPanelH << "\" fill=\"none\" stroke=\"#444\"/>\n";
    svg << "<text x=\"" << x0 + kPanelW / 2 << "\" y=\"" << y0 + kPanelH + 28
        << "\" text-anchor=\"middle\">"
        << (panel == 0 ? "target token probability" : "std of non-target probabilities")
        << "</text>\n";
    const double hi = panel == 0 ? 1.0 : kStdAxisMax;
    for (int t = 0; t <= 4; ++t) {
      svg << "<text x=\"" << x0 + kPanelW * t / 4.0 << "\" y=\"" << y0 + kPanelH + 14
          << "\" text-anchor=\"middle\">" << hi * t / 4.0 << "</text>\n";
    }
    for (std::size_t s = 0; s < hists.size(); ++s) {
      const DistHistogram& h = hists[s];
      const auto& c = panel == 0 ? h.target_prob_counts : h.nontarget_std_counts;
      svg << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" << kColors[s % 4]
          << "\" points=\"";
      for (std::size_t b = 0; b < c.size(); ++b) {
        const double frac = static_cast<double>(c[b]) / static_cast<double>(h.positions);
        const double x = x0 + kPanelW * (static_cast<double>(b) + 0.5) / c.size();
        const double y = y0 + kPanelH * (1.0 - frac / peak);
        svg << x << ',' << y << ' ';
      }
      svg << "\"/>\n";
    }
  }
  for (std::size_t s = 0; s < labels.size(); ++s) {
    svg << "<text x=\"" << kPad + 120 * s << "\" y=\"" << kPad - 12 << "\" fill=\""
        << kColors[s % 4] << "\">" << labels[s] << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string MetricsCsv(std::span<const MetricRow> rows) {
  std::string out = "role,task,metric,value\n";
  char value[64];
  for (const MetricRow& r : rows) {
    std::snprintf(value, sizeof(value), "%.6f", r.value);
    out += r.role + ',' + r.task + ',' + r.metric + ',' + value + '\n';
  }
  return out;
}

std::vector<MetricRow> ParseMetricsCsv(std::string_view text) {
  std::vector<MetricRow> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  Require(static_cast<bool>(std::getline(in, line)) && line == "role,task,metric,value",
          ErrorCode::kParse, "metrics csv: bad header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
    Require(cells.size() == 4, ErrorCode::kParse, "metrics csv: expected 4 columns: " + line);
    MetricRow r{cells[0], cells[1], cells[2], 0.0};
    try {
      r.value = std::stod(cells[3]);
    } catch (const std::exception&) {
      Fail(ErrorCode::kParse, "metrics csv: bad value '" + cells[3] + "'");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace wd
