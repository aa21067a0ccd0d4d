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

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace prune_audit {

enum class PValueMethod { kNone, kExact, kNormalApprox };
enum class Metric { kAccuracy, kLoss };
enum class Verdict { kValid, kInvalid };

const char* to_string(PValueMethod m);
const char* to_string(Metric m);
const char* to_string(Verdict v);
Metric parse_metric(const std::string& text);  // "acc" | "accuracy" | "loss"

// Kendall tau-a: (C - D) / (n(n-1)/2). Pairs tied in either coordinate count
// as neither concordant nor discordant.
struct KendallResult {
  double tau = 0.0;
  std::int64_t concordant = 0;
  std::int64_t discordant = 0;
  std::size_t n = 0;
  double p_value = 1.0;
  PValueMethod method = PValueMethod::kNone;
  // Sizes of tie groups (> 1) in each coordinate.
  std::vector<std::size_t> x_ties;
  std::vector<std::size_t> y_ties;

  std::int64_t total_pairs() const { return static_cast<std::int64_t>(n * (n - 1) / 2); }
  bool has_ties() const { return !x_ties.empty() || !y_ties.empty(); }
};

KendallResult kendall_tau(std::span<const double> x, std::span<const double> y);

// Tie-corrected tau-b of the same pair counts, for cross-checks.
double kendall_tau_b(const KendallResult& r);

// Exact two-sided p when n <= 33 and there are no ties, else the normal
// approximation with tie-adjusted variance.
KendallResult kendall_pvalue(KendallResult r);

inline constexpr std::size_t kExactPValueMaxN = 33;

// P(D = d), d = 0..n(n-1)/2, for the discordant-pair count of a uniformly
// random permutation (normalized Mahonian numbers).
std::vector<double> kendall_null_distribution(std::size_t n);

double exact_two_sided_p(std::size_t n, std::int64_t discordant);

// Two-sided normal-approximation p. The continuity correction (in units of
// S = C - D) is 1 for tie-free data, where S moves in steps of 2.
double normal_approx_p(const KendallResult& r, bool continuity_correction);

double kendall_variance(const KendallResult& r);

// One measured pruning combination as seen by the analytics.
struct Observation {
  std::string id;  // combination encoding or row label
  double pruned_train_loss = 0.0;
  double test_accuracy = 0.0;  // percent
  double test_loss = 0.0;
};

inline double metric_value(const Observation& o, Metric m) {
  return m == Metric::kAccuracy ? o.test_accuracy : o.test_loss;
}

// True when metric value a is strictly better than b.
inline bool strictly_better(double a, double b, Metric m) {
  return m == Metric::kAccuracy ? a > b : a < b;
}

// Index of the lowest pruned train loss; ties go to the smaller id.
std::size_t oracle_index(std::span<const Observation> obs);

// Fraction of observations whose final metric is strictly better than the
// oracle's.
double anomaly_ratio(std::span<const Observation> obs, std::size_t oracle, Metric metric);

struct PairClassification {
  double ratio = 0.0;  // counterexamples / all pairs
  std::size_t counterexamples = 0;
  std::size_t confirmations = 0;
  std::size_t ties = 0;
  std::size_t total_pairs = 0;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (i, j), i < j, lexicographic
};

// A counterexample is a pair where the observation with strictly lower pruned
// train loss has a strictly worse final metric; a confirmation is the
// opposite; every other pair is tied.
PairClassification counterexample_ratio(std::span<const Observation> obs, Metric metric);

// Valid iff p < 0.05 and tau > 0.2 (loss) or tau < -0.2 (accuracy).
Verdict validity_verdict(double tau, double p, Metric metric);

struct KeyedValue {
  std::string id;
  double value = 0.0;
};

// Kendall tau between partial- and full-retraining accuracy over
// observations matched by id. Throws listing ids present on one side only.
KendallResult partial_retrain_correlation(std::span<const KeyedValue> partial, std::span<const KeyedValue> full);

struct AnalysisReport {
  std::string label;
  Metric metric = Metric::kAccuracy;
  std::size_t n = 0;
  std::size_t n_failed = 0;
  KendallResult kendall_accuracy;  // pruned train loss vs final test accuracy
  KendallResult kendall_loss;      // pruned train loss vs final test loss
  std::size_t oracle = 0;
  std::string oracle_id;
  double anomaly_ratio = 0.0;
  PairClassification counterexamples;
  Verdict verdict = Verdict::kInvalid;
  std::vector<std::string> notes;

  const KendallResult& selected() const { return metric == Metric::kAccuracy ? kendall_accuracy : kendall_loss; }
};

AnalysisReport analyze(std::span<const Observation> obs, Metric metric, std::string label = {},
                       std::size_t n_failed = 0);

std::string report_to_json(const AnalysisReport& r);
AnalysisReport report_from_json(const std::string& text);

}  // namespace prune_audit
