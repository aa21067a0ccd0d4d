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

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "prune_audit/analytics.hpp"
#include "prune_audit/data.hpp"
#include "prune_audit/model_zoo.hpp"
#include "prune_audit/pruning.hpp"
#include "prune_audit/train.hpp"

namespace prune_audit {

struct ExperimentPlan {
  std::string dataset = "mnist";
  std::size_t train_subset = 0;  // 0 = full training set
  std::size_t test_subset = 0;   // 0 = full test set
  VariantSpec variant;
  TrainConfig pretrain;
  TrainConfig retrain;
  PruningPlan pruning;
  std::size_t repeats = 1;
  std::uint64_t base_seed = 0;
  double retrain_fraction = 1.0;  // 1.0 = full retraining
  Metric metric = Metric::kAccuracy;

  void validate() const;
  friend bool operator==(const ExperimentPlan&, const ExperimentPlan&) = default;
};

// Retraining schedule shortened to `fraction` of its length:
// epochs' = max(1, round(fraction * epochs)), milestones scaled and rounded
// half-up, rates unchanged.
TrainConfig partial_retrain_fraction(const TrainConfig& config, double fraction);

struct RunRecord {
  std::string combination;
  double pruned_train_loss = 0.0;
  std::vector<double> test_accuracy;  // per repeat, percent
  std::vector<double> test_loss;      // per repeat
  double mean_test_accuracy = 0.0;
  double mean_test_loss = 0.0;
  std::vector<std::uint64_t> seeds;
  double wall_time_s = 0.0;
  bool ok = true;
  std::string error;

  // Equality of everything except wall time.
  bool same_outcome(const RunRecord& other) const;
};

// One registry line (no trailing newline): tab-separated key=value fields.
std::string format_record(const RunRecord& r);
RunRecord parse_record(const std::string& line);

// Reads complete lines; a trailing line without '\n' (torn write) is ignored.
std::vector<RunRecord> read_registry(const std::filesystem::path& path);

// Drops a torn trailing line so appends start on a fresh line.
void repair_registry(const std::filesystem::path& path);

// Appends one line with a single write(2) on an O_APPEND descriptor.
void append_record(const std::filesystem::path& path, const RunRecord& r);

// Successful records only, with repeat means as the metric values.
std::vector<Observation> to_observations(const std::vector<RunRecord>& records);

std::uint64_t run_seed(std::uint64_t base_seed, const std::string& combination, std::size_t repeat);

// Loads <root>/<dataset>, takes the stratified subsets and standardizes both
// splits with the training statistics.
SplitPair prepare_data(const ExperimentPlan& plan, const std::filesystem::path& root);

struct PretrainResult {
  Network<float> net;
  std::vector<std::pair<double, EvalResult>> log;  // per epoch: (train loss, test metrics)
};

// Dense training with seed base_seed. When `out_dir` is given, writes
// dense.ckpt and pretrain_log.csv there.
PretrainResult pretrain(const ExperimentPlan& plan, const SplitPair& data,
                        const std::optional<std::filesystem::path>& out_dir = std::nullopt);

struct RunHooks {
  std::function<void()> on_pruned_loss_measured;
  std::function<void()> on_retrain_step;
};

// Prune, measure pruned train loss, then retrain `repeats` times.
RunRecord run_combination(const Network<float>& dense, const PruningCombination& combo, const ExperimentPlan& plan,
                          const SplitPair& data, const RunHooks& hooks = {});

struct SweepOptions {
  std::size_t workers = 1;
  std::filesystem::path registry;
  bool resume = false;
  // Stop scheduling new jobs once this many records have been appended in
  // this call (0 = no limit); used to simulate interruption.
  std::size_t stop_after = 0;
  std::function<void(const RunRecord&)> on_record;
};

struct SweepSummary {
  std::vector<RunRecord> records;  // registry contents, canonical combination order
  std::size_t skipped = 0;         // already present on resume
  std::size_t completed = 0;       // appended by this call
  std::size_t failed = 0;          // failed records in the registry
};

SweepSummary sweep(const ExperimentPlan& plan, const Network<float>& dense, const SplitPair& data,
                   const SweepOptions& options);

// Sorted by decoded combination.
void sort_records(std::vector<RunRecord>& records);

}  // namespace prune_audit
