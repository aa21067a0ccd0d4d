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

#include "prune_audit/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "json.hpp"
#include "prune_audit/error.hpp"

namespace prune_audit {

const char* to_string(PValueMethod m) {
  switch (m) {
    case PValueMethod::kExact:
      return "exact";
    case PValueMethod::kNormalApprox:
      return "normal";
    default:
      return "none";
  }
}

const char* to_string(Metric m) { return m == Metric::kAccuracy ? "acc" : "loss"; }
const char* to_string(Verdict v) { return v == Verdict::kValid ? "valid" : "invalid"; }

Metric parse_metric(const std::string& text) {
  if (text == "acc" || text == "accuracy") return Metric::kAccuracy;
  if (text == "loss") return Metric::kLoss;
  throw Error("metric must be acc or loss, got \"" + text + "\"", true);
}

namespace {

std::vector<std::size_t> tie_groups(std::span<const double> v) {
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  std::vector<std::size_t> groups;
  for (std::size_t i = 0; i < s.size();) {
    std::size_t j = i;
    while (j < s.size() && s[j] == s[i]) ++j;
    if (j - i > 1) groups.push_back(j - i);
    i = j;
  }
  return groups;
}

int sign(double v) { return (v > 0) - (v < 0); }

}  // namespace

KendallResult kendall_tau(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error("kendall_tau: inputs differ in length", true);
  if (x.size() < 2) throw Error("kendall_tau: need at least 2 observations", true);
  KendallResult r;
  r.n = x.size();
  for (std::size_t i = 0; i < r.n; ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw Error("kendall_tau: non-finite value", true);
    for (std::size_t j = i + 1; j < r.n; ++j) {
      const int s = sign(x[i] - x[j]) * sign(y[i] - y[j]);
      if (s > 0) ++r.concordant;
      if (s < 0) ++r.discordant;
    }
  }
  r.tau = static_cast<double>(r.concordant - r.discordant) / static_cast<double>(r.total_pairs());
  r.x_ties = tie_groups(x);
  r.y_ties = tie_groups(y);
  return r;
}

double kendall_tau_b(const KendallResult& r) {
  const double n0 = static_cast<double>(r.total_pairs());
  double n1 = 0.0, n2 = 0.0;
  for (std::size_t t : r.x_ties) n1 += static_cast<double>(t * (t - 1)) / 2.0;
  for (std::size_t u : r.y_ties) n2 += static_cast<double>(u * (u - 1)) / 2.0;
  const double denom = std::sqrt((n0 - n1) * (n0 - n2));
  if (denom == 0.0) return 0.0;
  return static_cast<double>(r.concordant - r.discordant) / denom;
}

std::vector<double> kendall_null_distribution(std::size_t n) {
  // Inserting element k into a permutation of k-1 adds 0..k-1 inversions
  // with equal probability.
  std::vector<double> dist{1.0};
  for (std::size_t k = 2; k <= n; ++k) {
    std::vector<double> next(dist.size() + k - 1, 0.0);
    std::vector<double> prefix(dist.size() + 1, 0.0);
    for (std::size_t d = 0; d < dist.size(); ++d) prefix[d + 1] = prefix[d] + dist[d];
    for (std::size_t d = 0; d < next.size(); ++d) {
      const std::size_t hi = std::min(d, dist.size() - 1);
      const std::size_t lo = d >= k - 1 ? d - (k - 1) : 0;
      if (lo <= hi) next[d] = (prefix[hi + 1] - prefix[lo]) / static_cast<double>(k);
    }
    dist = std::move(next);
  }
  return dist;
}

double exact_two_sided_p(std::size_t n, std::int64_t discordant) {
  const auto dist = kendall_null_distribution(n);
  const std::int64_t total = static_cast<std::int64_t>(dist.size()) - 1;
  const std::int64_t c = std::min(discordant, total - discordant);
  double tail = 0.0;
  for (std::int64_t d = 0; d <= c; ++d) tail += dist[static_cast<std::size_t>(d)];
  return std::min(1.0, 2.0 * tail);
}

double kendall_variance(const KendallResult& r) {
  const double n = static_cast<double>(r.n);
  double vt = 0.0, vu = 0.0, t1 = 0.0, u1 = 0.0, t2 = 0.0, u2 = 0.0;
  for (std::size_t g : r.x_ties) {
    const double t = static_cast<double>(g);
    vt += t * (t - 1) * (2 * t + 5);
    t1 += t * (t - 1);
    t2 += t * (t - 1) * (t - 2);
  }
  for (std::size_t g : r.y_ties) {
    const double u = static_cast<double>(g);
    vu += u * (u - 1) * (2 * u + 5);
    u1 += u * (u - 1);
    u2 += u * (u - 1) * (u - 2);
  }
  double var = (n * (n - 1) * (2 * n + 5) - vt - vu) / 18.0;
  if (r.n > 2) var += (t2 * u2) / (9.0 * n * (n - 1) * (n - 2));
  var += (t1 * u1) / (2.0 * n * (n - 1));
  return var;
}

double normal_approx_p(const KendallResult& r, bool continuity_correction) {
  const double var = kendall_variance(r);
  if (!(var > 0.0)) return 1.0;
  const double s = std::abs(static_cast<double>(r.concordant - r.discordant));
  const double num = std::max(0.0, s - (continuity_correction ? 1.0 : 0.0));
  const double z = num / std::sqrt(var);
  return std::clamp(std::erfc(z / std::sqrt(2.0)), 0.0, 1.0);
}

KendallResult kendall_pvalue(KendallResult r) {
  if (!r.has_ties() && r.n <= kExactPValueMaxN) {
    r.p_value = exact_two_sided_p(r.n, r.discordant);
    r.method = PValueMethod::kExact;
  } else {
    r.p_value = normal_approx_p(r, !r.has_ties());
    r.method = PValueMethod::kNormalApprox;
  }
  return r;
}

std::size_t oracle_index(std::span<const Observation> obs) {
  if (obs.empty()) throw Error("no observations", true);
  std::size_t best = 0;
  for (std::size_t i = 1; i < obs.size(); ++i) {
    if (obs[i].pruned_train_loss < obs[best].pruned_train_loss ||
        (obs[i].pruned_train_loss == obs[best].pruned_train_loss && obs[i].id < obs[best].id)) {
      best = i;
    }
  }
  return best;
}

double anomaly_ratio(std::span<const Observation> obs, std::size_t oracle, Metric metric) {
  if (obs.empty()) throw Error("anomaly_ratio: no observations", true);
  if (oracle >= obs.size()) throw Error("anomaly_ratio: oracle index out of range", true);
  const double ref = metric_value(obs[oracle], metric);
  std::size_t better = 0;
  for (const auto& o : obs) {
    if (strictly_better(metric_value(o, metric), ref, metric)) ++better;
  }
  return static_cast<double>(better) / static_cast<double>(obs.size());
}

PairClassification counterexample_ratio(std::span<const Observation> obs, Metric metric) {
  if (obs.size() < 2) throw Error("counterexample_ratio: need at least 2 observations", true);
  PairClassification c;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    for (std::size_t j = i + 1; j < obs.size(); ++j) {
      ++c.total_pairs;
      const double li = obs[i].pruned_train_loss, lj = obs[j].pruned_train_loss;
      const double mi = metric_value(obs[i], metric), mj = metric_value(obs[j], metric);
      if (li == lj || mi == mj) {
        ++c.ties;
        continue;
      }
      const bool i_lower = li < lj;
      const double m_low = i_lower ? mi : mj;
      const double m_high = i_lower ? mj : mi;
      if (strictly_better(m_high, m_low, metric)) {
        ++c.counterexamples;
        c.pairs.emplace_back(i, j);
      } else {
        ++c.confirmations;
      }
    }
  }
  c.ratio = static_cast<double>(c.counterexamples) / static_cast<double>(c.total_pairs);
  return c;
}

Verdict validity_verdict(double tau, double p, Metric metric) {
  const bool significant = p < 0.05;
  const bool strong = metric == Metric::kLoss ? tau > 0.2 : tau < -0.2;
  return significant && strong ? Verdict::kValid : Verdict::kInvalid;
}

KendallResult partial_retrain_correlation(std::span<const KeyedValue> partial, std::span<const KeyedValue> full) {
  std::map<std::string, double> p, f;
  for (const auto& kv : partial) p[kv.id] = kv.value;
  for (const auto& kv : full) f[kv.id] = kv.value;
  std::vector<std::string> only_partial, only_full;
  for (const auto& [id, v] : p) {
    if (!f.count(id)) only_partial.push_back(id);
  }
  for (const auto& [id, v] : f) {
    if (!p.count(id)) only_full.push_back(id);
  }
  if (!only_partial.empty() || !only_full.empty()) {
    std::string msg = "partial/full combination sets differ;";
    for (const auto& id : only_partial) msg += " partial-only " + id;
    for (const auto& id : only_full) msg += " full-only " + id;
    throw Error(msg, true);
  }
  std::vector<double> x, y;
  for (const auto& [id, v] : p) {
    x.push_back(v);
    y.push_back(f[id]);
  }
  return kendall_pvalue(kendall_tau(x, y));
}

AnalysisReport analyze(std::span<const Observation> obs, Metric metric, std::string label, std::size_t n_failed) {
  if (obs.size() < 2) throw Error("analysis needs at least 2 successful records", true);
  AnalysisReport r;
  r.label = std::move(label);
  r.metric = metric;
  r.n = obs.size();
  r.n_failed = n_failed;
  std::vector<double> loss, acc, test_loss;
  for (const auto& o : obs) {
    loss.push_back(o.pruned_train_loss);
    acc.push_back(o.test_accuracy);
    test_loss.push_back(o.test_loss);
  }
  r.kendall_accuracy = kendall_pvalue(kendall_tau(loss, acc));
  r.kendall_loss = kendall_pvalue(kendall_tau(loss, test_loss));
  r.oracle = oracle_index(obs);
  r.oracle_id = obs[r.oracle].id;
  r.anomaly_ratio = anomaly_ratio(obs, r.oracle, metric);
  r.counterexamples = counterexample_ratio(obs, metric);
  const auto& k = r.selected();
  r.verdict = validity_verdict(k.tau, k.p_value, metric);
  if (n_failed > 0) r.notes.push_back(std::to_string(n_failed) + " failed combination(s) excluded");
  return r;
}

namespace {

nlohmann::json kendall_json(const KendallResult& k) {
  return {{"tau", k.tau},
          {"concordant", k.concordant},
          {"discordant", k.discordant},
          {"n", k.n},
          {"p_value", k.p_value},
          {"method", to_string(k.method)},
          {"x_ties", k.x_ties},
          {"y_ties", k.y_ties}};
}

KendallResult kendall_from(const nlohmann::json& j) {
  KendallResult k;
  k.tau = j.at("tau").get<double>();
  k.concordant = j.at("concordant").get<std::int64_t>();
  k.discordant = j.at("discordant").get<std::int64_t>();
  k.n = j.at("n").get<std::size_t>();
  k.p_value = j.at("p_value").get<double>();
  const auto m = j.at("method").get<std::string>();
  k.method = m == "exact" ? PValueMethod::kExact : m == "normal" ? PValueMethod::kNormalApprox : PValueMethod::kNone;
  k.x_ties = j.at("x_ties").get<std::vector<std::size_t>>();
  k.y_ties = j.at("y_ties").get<std::vector<std::size_t>>();
  return k;
}

}  // namespace

std::string report_to_json(const AnalysisReport& r) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [i, j] : r.counterexamples.pairs) pairs.push_back({i, j});
  const nlohmann::json j = {
      {"label", r.label},
      {"metric", to_string(r.metric)},
      {"n", r.n},
      {"n_failed", r.n_failed},
      {"kendall_accuracy", kendall_json(r.kendall_accuracy)},
      {"kendall_loss", kendall_json(r.kendall_loss)},
      {"oracle", r.oracle},
      {"oracle_id", r.oracle_id},
      {"anomaly_ratio", r.anomaly_ratio},
      {"counterexamples",
       {{"ratio", r.counterexamples.ratio},
        {"counterexamples", r.counterexamples.counterexamples},
        {"confirmations", r.counterexamples.confirmations},
        {"ties", r.counterexamples.ties},
        {"total_pairs", r.counterexamples.total_pairs},
        {"pairs", pairs}}},
      {"verdict", to_string(r.verdict)},
      {"notes", r.notes},
  };
  return j.dump(2) + "\n";
}

AnalysisReport report_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    AnalysisReport r;
    r.label = j.at("label").get<std::string>();
    r.metric = parse_metric(j.at("metric").get<std::string>());
    r.n = j.at("n").get<std::size_t>();
    r.n_failed = j.at("n_failed").get<std::size_t>();
    r.kendall_accuracy = kendall_from(j.at("kendall_accuracy"));
    r.kendall_loss = kendall_from(j.at("kendall_loss"));
    r.oracle = j.at("oracle").get<std::size_t>();
    r.oracle_id = j.at("oracle_id").get<std::string>();
    r.anomaly_ratio = j.at("anomaly_ratio").get<double>();
    const auto& c = j.at("counterexamples");
    r.counterexamples.ratio = c.at("ratio").get<double>();
    r.counterexamples.counterexamples = c.at("counterexamples").get<std::size_t>();
    r.counterexamples.confirmations = c.at("confirmations").get<std::size_t>();
    r.counterexamples.ties = c.at("ties").get<std::size_t>();
    r.counterexamples.total_pairs = c.at("total_pairs").get<std::size_t>();
    for (const auto& p : c.at("pairs")) r.counterexamples.pairs.emplace_back(p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>());
    r.verdict = j.at("verdict").get<std::string>() == "valid" ? Verdict::kValid : Verdict::kInvalid;
    r.notes = j.at("notes").get<std::vector<std::string>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("analysis report: ") + e.what(), true);
  }
}

}  // namespace prune_audit
