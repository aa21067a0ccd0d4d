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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "prune_audit/analytics.hpp"
#include "prune_audit/rng.hpp"
#include "test_util.hpp"

namespace prune_audit {
namespace {

// Brute-force pair loop, independent of the library's counting.
struct PairCounts {
  std::int64_t c = 0, d = 0;
};

PairCounts brute_pairs(const std::vector<double>& x, const std::vector<double>& y) {
  PairCounts out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const double s = (x[i] - x[j]) * (y[i] - y[j]);
      if (s > 0) ++out.c;
      if (s < 0) ++out.d;
    }
  }
  return out;
}

std::vector<double> column(const std::vector<Observation>& obs, double Observation::*field) {
  std::vector<double> v;
  for (const auto& o : obs) v.push_back(o.*field);
  return v;
}

TEST(Kendall, IdentityAndReversal) {
  const std::vector<double> x{1, 2, 3}, up{1, 2, 3}, down{3, 2, 1};
  EXPECT_DOUBLE_EQ(kendall_tau(x, up).tau, 1.0);
  EXPECT_DOUBLE_EQ(kendall_tau(x, down).tau, -1.0);
}

TEST(Kendall, HandCountedPairs) {
  const std::vector<double> x{1, 2, 3, 4}, y{2, 1, 4, 3};
  const auto r = kendall_tau(x, y);
  EXPECT_EQ(r.concordant, 4);
  EXPECT_EQ(r.discordant, 2);
  EXPECT_NEAR(r.tau, 1.0 / 3.0, 1e-15);
}

TEST(Kendall, RejectsShortOrMismatchedInput) {
  const std::vector<double> one{1}, two{1, 2};
  EXPECT_THROW(kendall_tau(one, one), Error);
  EXPECT_THROW(kendall_tau(one, two), Error);
}

TEST(Kendall, TwoPointsExactPIsOne) {
  const std::vector<double> x{1, 2};
  const auto r = kendall_pvalue(kendall_tau(x, x));
  EXPECT_EQ(r.method, PValueMethod::kExact);
  EXPECT_DOUBLE_EQ(r.p_value, 1.0);
}

// All 24 permutations of 4 items: the two-sided tail P(|S| >= |s|) from the
// enumeration must match the exact p for every achievable S.
TEST(Kendall, ExactPMatchesPermutationEnumerationN4) {
  std::vector<int> perm{0, 1, 2, 3};
  std::vector<std::int64_t> s_values;
  do {
    const std::vector<double> x{0, 1, 2, 3};
    const std::vector<double> y(perm.begin(), perm.end());
    const auto pc = brute_pairs(x, y);
    s_values.push_back(pc.c - pc.d);
  } while (std::next_permutation(perm.begin(), perm.end()));
  ASSERT_EQ(s_values.size(), 24u);
  for (std::int64_t s : std::set<std::int64_t>(s_values.begin(), s_values.end())) {
    const double tail =
        static_cast<double>(std::count_if(s_values.begin(), s_values.end(),
                                          [&](std::int64_t v) { return std::llabs(v) >= std::llabs(s); })) /
        24.0;
    const std::int64_t d = (6 - s) / 2;
    EXPECT_NEAR(exact_two_sided_p(4, d), tail, 1e-15) << "S=" << s;
  }
}

TEST(Kendall, NullDistributionMatchesEnumeration) {
  for (std::size_t n = 1; n <= 7; ++n) {
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<double> counts(n * (n - 1) / 2 + 1, 0.0);
    double total = 0;
    do {
      std::size_t inv = 0;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) inv += perm[i] > perm[j];
      }
      counts[inv] += 1;
      total += 1;
    } while (std::next_permutation(perm.begin(), perm.end()));
    const auto dist = kendall_null_distribution(n);
    ASSERT_EQ(dist.size(), counts.size());
    for (std::size_t d = 0; d < counts.size(); ++d) EXPECT_NEAR(dist[d], counts[d] / total, 1e-14);
  }
}

TEST(Kendall, ExactAndApproxAgreeWithoutTies) {
  Rng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 8 + uniform_index(rng, 26);
    std::vector<double> x(n), y(n);
    std::iota(x.begin(), x.end(), 0.0);
    std::iota(y.begin(), y.end(), 0.0);
    fisher_yates(y, rng);
    // Mix in some correlation so the tail is not always near 1.
    for (std::size_t i = 0; i < n; ++i) y[i] += uniform(rng, 0, 1) * static_cast<double>(i) * (trial % 3);
    auto r = kendall_tau(x, y);
    if (r.has_ties()) continue;
    r = kendall_pvalue(r);
    ASSERT_EQ(r.method, PValueMethod::kExact);
    worst = std::max(worst, std::abs(r.p_value - normal_approx_p(r, true)));
  }
  EXPECT_LT(worst, 0.03);
}

TEST(Kendall, TiesUseNormalApproximation) {
  const std::vector<double> x{1, 2, 3, 4, 5}, y{1, 1, 2, 3, 4};
  const auto r = kendall_pvalue(kendall_tau(x, y));
  EXPECT_EQ(r.method, PValueMethod::kNormalApprox);
  EXPECT_EQ(r.y_ties, std::vector<std::size_t>{2});
  EXPECT_GE(r.p_value, 0.0);
  EXPECT_LE(r.p_value, 1.0);
}

TEST(Kendall, AntisymmetryAndMonotoneInvariance) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 5 + uniform_index(rng, 30);
    std::vector<double> x(n), y(n), neg(n), tx(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = uniform(rng, -3, 3);
      y[i] = uniform(rng, -3, 3);
      neg[i] = -y[i];
      tx[i] = std::exp(x[i]) + 5.0;
    }
    const auto a = kendall_tau(x, y), b = kendall_tau(x, neg), c = kendall_tau(tx, y);
    EXPECT_DOUBLE_EQ(a.tau, -b.tau);
    EXPECT_EQ(a.concordant, c.concordant);
    EXPECT_EQ(a.discordant, c.discordant);
    const auto pc = brute_pairs(x, y);
    EXPECT_EQ(a.concordant, pc.c);
    EXPECT_EQ(a.discordant, pc.d);
  }
}

TEST(Kendall, TauBMatchesDirectFormula) {
  const std::vector<double> x{1, 2, 2, 3, 4, 4, 4}, y{3, 1, 2, 2, 5, 6, 6};
  const auto r = kendall_tau(x, y);
  const auto pc = brute_pairs(x, y);
  std::int64_t tx = 0, ty = 0, n0 = 21;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      tx += x[i] == x[j];
      ty += y[i] == y[j];
    }
  }
  const double expected = static_cast<double>(pc.c - pc.d) / std::sqrt(double(n0 - tx) * double(n0 - ty));
  EXPECT_NEAR(kendall_tau_b(r), expected, 1e-14);
}

class ViTFixture : public ::testing::Test {
 protected:
  void SetUp() override { obs = testing::load_observations(testing::fixture("vit_heads_fixture.csv")); }
  std::vector<Observation> obs;
};

TEST_F(ViTFixture, KendallAgainstPublishedValues) {
  ASSERT_EQ(obs.size(), 10u);
  const auto loss = column(obs, &Observation::pruned_train_loss);
  const auto acc = kendall_pvalue(kendall_tau(loss, column(obs, &Observation::test_accuracy)));
  const auto tl = kendall_pvalue(kendall_tau(loss, column(obs, &Observation::test_loss)));
  EXPECT_NEAR(acc.tau, 0.16, 0.005);
  EXPECT_NEAR(acc.p_value, 0.60, 0.05);
  EXPECT_EQ(acc.method, PValueMethod::kExact);
  EXPECT_NEAR(tl.tau, -0.04, 0.005);
  EXPECT_NEAR(tl.p_value, 0.86, 0.05);
  EXPECT_EQ(tl.method, PValueMethod::kNormalApprox);  // the loss column has a tie
}

TEST_F(ViTFixture, CounterexamplePairsMatchPublishedList) {
  const std::set<std::pair<std::size_t, std::size_t>> expected = {
      {7, 10}, {7, 8}, {8, 10}, {9, 10}, {8, 9}, {1, 9}, {2, 7}, {2, 8}, {2, 10}, {3, 7}, {3, 8}, {3, 10}, {1, 4},
      {4, 7},  {4, 8}, {4, 9},  {4, 10}, {6, 8}, {6, 10}, {2, 5}, {3, 5}, {4, 5}, {5, 6}, {5, 7}, {5, 8}, {5, 9}};
  const auto pc = counterexample_ratio(obs, Metric::kAccuracy);
  EXPECT_EQ(pc.counterexamples, 26u);
  EXPECT_EQ(pc.total_pairs, 45u);
  EXPECT_NEAR(pc.ratio, 26.0 / 45.0, 1e-15);
  std::set<std::pair<std::size_t, std::size_t>> got;
  for (const auto& [i, j] : pc.pairs) got.insert({i + 1, j + 1});
  EXPECT_EQ(got, expected);
  EXPECT_TRUE(std::is_sorted(pc.pairs.begin(), pc.pairs.end()));
}

TEST_F(ViTFixture, AnomalyRatio) {
  const std::size_t oracle = oracle_index(obs);
  EXPECT_EQ(obs[oracle].id, "1");
  EXPECT_DOUBLE_EQ(anomaly_ratio(obs, oracle, Metric::kAccuracy), 0.2);
}

TEST(Anomaly, OracleBestGivesZero) {
  const std::vector<Observation> obs{{"a", 1.0, 95.0, 0.1}, {"b", 2.0, 90.0, 0.3}, {"c", 3.0, 95.0, 0.2}};
  EXPECT_DOUBLE_EQ(anomaly_ratio(obs, 0, Metric::kAccuracy), 0.0);  // tie at 95 is not better
  EXPECT_DOUBLE_EQ(anomaly_ratio(obs, 0, Metric::kLoss), 0.0);
}

TEST(Anomaly, MatchesNaiveLoopAndIgnoresRelabeling) {
  Rng rng(99);
  std::vector<Observation> obs(1000);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    obs[i] = {std::to_string(i), uniform(rng, 0, 5), std::round(uniform(rng, 80, 99) * 10) / 10,
              uniform(rng, 0, 1)};
  }
  for (Metric m : {Metric::kAccuracy, Metric::kLoss}) {
    const std::size_t oracle = oracle_index(obs);
    std::size_t count = 0;
    for (const auto& o : obs) {
      const double a = metric_value(o, m), b = metric_value(obs[oracle], m);
      count += m == Metric::kAccuracy ? a > b : a < b;
    }
    const double naive = static_cast<double>(count) / static_cast<double>(obs.size());
    EXPECT_DOUBLE_EQ(anomaly_ratio(obs, oracle, m), naive);

    std::vector<Observation> shuffled = obs;
    std::swap(shuffled[oracle], shuffled[0]);
    std::vector<std::size_t> idx(shuffled.size() - 1);
    std::iota(idx.begin(), idx.end(), 1);
    fisher_yates(idx, rng);
    std::vector<Observation> relabeled{shuffled[0]};
    for (std::size_t k : idx) relabeled.push_back(shuffled[k]);
    EXPECT_DOUBLE_EQ(anomaly_ratio(relabeled, 0, m), naive);
  }
}

TEST(Anomaly, EmptyIsError) {
  EXPECT_THROW(anomaly_ratio({}, 0, Metric::kAccuracy), Error);
}

TEST(Counterexample, HandCases) {
  const std::vector<Observation> two{{"a", 1.0, 90.0, 0.5}, {"b", 2.0, 95.0, 0.4}};
  const auto pc = counterexample_ratio(two, Metric::kAccuracy);
  EXPECT_EQ(pc.counterexamples, 1u);
  EXPECT_DOUBLE_EQ(pc.ratio, 1.0);

  std::vector<Observation> mono;
  for (int i = 0; i < 8; ++i) mono.push_back({std::to_string(i), double(i), 99.0 - i, 0.1 * i});
  EXPECT_DOUBLE_EQ(counterexample_ratio(mono, Metric::kAccuracy).ratio, 0.0);
  EXPECT_DOUBLE_EQ(counterexample_ratio(mono, Metric::kLoss).ratio, 0.0);
}

TEST(Counterexample, ClassesPartitionAllPairs) {
  Rng rng(3);
  std::vector<Observation> obs(60);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    // Coarse values force plenty of ties in both coordinates.
    obs[i] = {std::to_string(i), double(uniform_index(rng, 6)), double(uniform_index(rng, 5)),
              double(uniform_index(rng, 4))};
  }
  for (Metric m : {Metric::kAccuracy, Metric::kLoss}) {
    const auto pc = counterexample_ratio(obs, m);
    EXPECT_EQ(pc.counterexamples + pc.confirmations + pc.ties, pc.total_pairs);
    std::size_t brute = 0;
    for (std::size_t i = 0; i < obs.size(); ++i) {
      for (std::size_t j = i + 1; j < obs.size(); ++j) {
        const auto& lo = obs[i].pruned_train_loss < obs[j].pruned_train_loss ? obs[i] : obs[j];
        const auto& hi = obs[i].pruned_train_loss < obs[j].pruned_train_loss ? obs[j] : obs[i];
        if (lo.pruned_train_loss == hi.pruned_train_loss) continue;
        brute += strictly_better(metric_value(hi, m), metric_value(lo, m), m);
      }
    }
    EXPECT_EQ(pc.counterexamples, brute);
  }
}

TEST(Verdict, PublishedCases) {
  EXPECT_EQ(validity_verdict(-0.60, 4.9e-09, Metric::kAccuracy), Verdict::kValid);
  EXPECT_EQ(validity_verdict(-0.19, 1.8e-03, Metric::kAccuracy), Verdict::kInvalid);
  EXPECT_EQ(validity_verdict(+0.24, 1.9e-02, Metric::kAccuracy), Verdict::kInvalid);
  EXPECT_EQ(validity_verdict(0.57, 3.1e-08, Metric::kLoss), Verdict::kValid);
}

TEST(Verdict, Boundaries) {
  EXPECT_EQ(validity_verdict(-0.2, 0.001, Metric::kAccuracy), Verdict::kInvalid);
  EXPECT_EQ(validity_verdict(-0.21, 0.05, Metric::kAccuracy), Verdict::kInvalid);
  EXPECT_EQ(validity_verdict(0.2, 0.001, Metric::kLoss), Verdict::kInvalid);
  EXPECT_EQ(validity_verdict(-0.5, 0.001, Metric::kLoss), Verdict::kInvalid);
}

TEST(PartialRetrain, IdentityConstantAndMismatch) {
  const std::vector<KeyedValue> a{{"x", 1}, {"y", 3}, {"z", 2}};
  const std::vector<KeyedValue> reordered{{"z", 2}, {"x", 1}, {"y", 3}};
  EXPECT_DOUBLE_EQ(partial_retrain_correlation(a, reordered).tau, 1.0);
  const std::vector<KeyedValue> flat{{"x", 5}, {"y", 5}, {"z", 5}};
  EXPECT_DOUBLE_EQ(partial_retrain_correlation(a, flat).tau, 0.0);
  const std::vector<KeyedValue> other{{"x", 1}, {"y", 3}, {"w", 2}};
  try {
    partial_retrain_correlation(a, other);
    FAIL() << "expected mismatch error";
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("z"), std::string::npos);
    EXPECT_NE(msg.find("w"), std::string::npos);
  }
}

TEST(PartialRetrain, MatchesPairLoop) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 3 + uniform_index(rng, 40);
    std::vector<KeyedValue> p, f;
    std::vector<double> px, fx;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = std::round(uniform(rng, 0, 20)), b = std::round(uniform(rng, 0, 20));
      p.push_back({"c" + std::to_string(i), a});
      f.push_back({"c" + std::to_string(i), b});
      px.push_back(a);
      fx.push_back(b);
    }
    fisher_yates(f, rng);
    const auto pc = brute_pairs(px, fx);
    const auto r = partial_retrain_correlation(p, f);
    EXPECT_EQ(r.concordant, pc.c);
    EXPECT_EQ(r.discordant, pc.d);
  }
}

TEST(Analyze, ReportRoundTripsThroughJson) {
  const auto obs = testing::load_observations(testing::fixture("vit_heads_fixture.csv"));
  const auto r = analyze(obs, Metric::kAccuracy, "fixture", 2);
  EXPECT_EQ(r.n, 10u);
  EXPECT_EQ(r.n_failed, 2u);
  EXPECT_EQ(r.verdict, Verdict::kInvalid);
  const auto back = report_from_json(report_to_json(r));
  EXPECT_EQ(back.label, "fixture");
  EXPECT_EQ(back.kendall_accuracy.tau, r.kendall_accuracy.tau);
  EXPECT_EQ(back.kendall_loss.p_value, r.kendall_loss.p_value);
  EXPECT_EQ(back.counterexamples.pairs, r.counterexamples.pairs);
  EXPECT_EQ(back.anomaly_ratio, r.anomaly_ratio);
  EXPECT_EQ(back.oracle_id, "1");
  EXPECT_EQ(report_to_json(back), report_to_json(r));
}

}  // namespace
}  // namespace prune_audit
