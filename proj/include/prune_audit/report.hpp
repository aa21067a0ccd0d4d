/* Copyright 2026 The prune-audit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "prune_audit/analytics.hpp"
#include "prune_audit/harness.hpp"

namespace prune_audit {

// Header: combination,pruned_train_loss,metric_mean,metric_r0,...; failed
// records are skipped.
std::string scatter_csv(const std::vector<RunRecord>& records, Metric metric);

// Pruned train loss on x, final metric on y. Every record is one element with
// class "point": "point oracle" (star), "point anomaly" (red) or "point normal"
// (green).
std::string scatter_svg(const std::vector<RunRecord>& records, Metric metric, const std::string& title = {});

// Writes <stem>.csv and <stem>.svg.
void emit_scatter(const std::vector<RunRecord>& records, Metric metric, const std::filesystem::path& stem,
                  const std::string& title = {});

struct SummaryEntry {
  std::string row;     // pruned layers, e.g. "Conv2"
  std::string column;  // pruning ratio, e.g. "0.2"
  AnalysisReport report;
};

// "tau / p" with tau to 2 decimals and p in scientific notation; invalid
// verdicts get a trailing " (x)".
std::string summary_cell(double tau, double p, Verdict verdict);

// Row label x column label grid of the selected-metric cells, followed by
// disclosures (failed runs, topology, combination counts).
std::string summary_table(const std::vector<SummaryEntry>& entries);

std::string summary_csv(const std::vector<SummaryEntry>& entries);

struct SummaryCsvRow {
  std::string row;
  std::string column;
  Metric metric = Metric::kAccuracy;
  double tau = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  std::size_t n_failed = 0;
  double anomaly_ratio = 0.0;
  double counterexample_ratio = 0.0;
  Verdict verdict = Verdict::kInvalid;
};

std::vector<SummaryCsvRow> parse_summary_csv(const std::string& text);

// Writes summary.txt and summary.csv into `dir`.
void emit_summary(const std::vector<SummaryEntry>& entries, const std::filesystem::path& dir);

// Row/column labels of a plan: names of the layers with a nonzero ratio and
// the distinct nonzero ratios.
std::pair<std::string, std::string> plan_labels(const ExperimentPlan& plan);

}  // namespace prune_audit
