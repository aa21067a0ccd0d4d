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

#include "prune_audit/plan.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace prune_audit {

namespace {

using nlohmann::ordered_json;
using Kind = PlanError::Kind;

class Section {
 public:
  Section(const ordered_json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw PlanError(Kind::kTypeError, path_, "expected an object");
  }

  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

  bool has(const std::string& k) const { return obj_.contains(k); }

  const ordered_json& require(const std::string& k) {
    seen_.insert(k);
    if (!obj_.contains(k)) throw PlanError(Kind::kMissingKey, key(k), "required key is missing");
    return obj_.at(k);
  }

  Section section(const std::string& k) { return Section(require(k), key(k)); }

  std::uint64_t get_uint(const std::string& k) { return as_uint(require(k), key(k)); }

  std::uint64_t get_uint(const std::string& k, std::uint64_t fallback) {
    seen_.insert(k);
    return has(k) ? as_uint(obj_.at(k), key(k)) : fallback;
  }

  double get_double(const std::string& k) { return as_double(require(k), key(k)); }

  double get_double(const std::string& k, double fallback) {
    seen_.insert(k);
    return has(k) ? as_double(obj_.at(k), key(k)) : fallback;
  }

  std::string get_string(const std::string& k) { return as_string(require(k), key(k)); }

  std::string get_string(const std::string& k, const std::string& fallback) {
    seen_.insert(k);
    return has(k) ? as_string(obj_.at(k), key(k)) : fallback;
  }

  void finish() const {
    for (const auto& [k, v] : obj_.items()) {
      if (!seen_.count(k)) throw PlanError(Kind::kUnknownKey, key(k), "unknown key");
    }
  }

  static std::uint64_t as_uint(const ordered_json& v, const std::string& path) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer()) throw PlanError(Kind::kInvalid, path, "must be non-negative");
    throw PlanError(Kind::kTypeError, path, "expected a non-negative integer, got " + std::string(v.type_name()));
  }

  static double as_double(const ordered_json& v, const std::string& path) {
    if (!v.is_number()) throw PlanError(Kind::kTypeError, path, "expected a number, got " + std::string(v.type_name()));
    return v.get<double>();
  }

  static std::string as_string(const ordered_json& v, const std::string& path) {
    if (!v.is_string()) throw PlanError(Kind::kTypeError, path, "expected a string, got " + std::string(v.type_name()));
    return v.get<std::string>();
  }

 private:
  const ordered_json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

// Runs `check` and rethrows validation errors as invariant violations at `path`.
template <typename F>
void at_path(const std::string& path, F&& check) {
  try {
    check();
  } catch (const PlanError&) {
    throw;
  } catch (const Error& e) {
    throw PlanError(Kind::kInvalid, path, e.what());
  }
}

TrainConfig parse_train(Section s, bool allow_zero_epochs) {
  TrainConfig c;
  c.epochs = s.get_uint("epochs");
  c.batch_size = s.get_uint("batch_size");
  c.momentum = s.get_double("momentum", c.momentum);
  c.weight_decay = s.get_double("weight_decay", c.weight_decay);
  const auto& sched = s.require("lr_schedule");
  const std::string sched_path = s.key("lr_schedule");
  if (!sched.is_array()) throw PlanError(Kind::kTypeError, sched_path, "expected an array of milestones");
  c.lr_schedule.clear();
  for (std::size_t i = 0; i < sched.size(); ++i) {
    Section m(sched[i], sched_path + "[" + std::to_string(i) + "]");
    c.lr_schedule.push_back({m.get_uint("start_epoch"), m.get_double("learning_rate")});
    m.finish();
  }
  s.finish();
  if (c.epochs == 0 && !allow_zero_epochs) throw PlanError(Kind::kInvalid, s.key("epochs"), "must be at least 1");
  if (c.batch_size == 0) throw PlanError(Kind::kInvalid, s.key("batch_size"), "must be at least 1");
  at_path(s.key("momentum"), [&] {
    if (c.momentum < 0.0 || c.momentum >= 1.0) throw Error("must be in [0, 1)", true);
  });
  at_path(s.key("weight_decay"), [&] {
    if (c.weight_decay < 0.0) throw Error("must be non-negative", true);
  });
  at_path(sched_path, [&] { c.validate(allow_zero_epochs); });
  return c;
}

ordered_json train_json(const TrainConfig& c) {
  ordered_json sched = ordered_json::array();
  for (const auto& m : c.lr_schedule) sched.push_back({{"start_epoch", m.start_epoch}, {"learning_rate", m.learning_rate}});
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"lr_schedule", sched}};
}

}  // namespace

ExperimentPlan parse_plan_text(const std::string& text) {
  ordered_json root;
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    root = ordered_json::object();
  } else {
    try {
      root = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw PlanError(Kind::kSyntax, "", std::string("malformed JSON: ") + e.what());
    }
  }
  Section top(root, "");
  ExperimentPlan p;

  {
    Section s = top.section("dataset");
    p.dataset = s.get_string("name");
    p.train_subset = s.get_uint("train_subset", 0);
    p.test_subset = s.get_uint("test_subset", 0);
    s.finish();
    if (p.dataset.empty()) throw PlanError(Kind::kInvalid, "dataset.name", "must not be empty");
  }
  {
    Section s = top.section("model");
    const std::string variant = s.get_string("variant");
    at_path("model.variant", [&] { p.variant = parse_variant(variant); });
    p.base_seed = s.get_uint("base_seed", 0);
    s.finish();
  }
  p.pretrain = parse_train(top.section("pretrain"), false);
  {
    Section s = top.section("retrain");
    p.repeats = s.get_uint("repeats", 1);
    p.retrain_fraction = s.get_double("retrain_fraction", 1.0);
    // The remaining keys form the TrainConfig; strip the harness-level ones.
    ordered_json rest = top.require("retrain");
    rest.erase("repeats");
    rest.erase("retrain_fraction");
    p.retrain = parse_train(Section(rest, "retrain"), true);
    if (p.repeats < 1) throw PlanError(Kind::kInvalid, "retrain.repeats", "must be at least 1");
    if (!(p.retrain_fraction > 0.0 && p.retrain_fraction <= 1.0)) {
      throw PlanError(Kind::kInvalid, "retrain.retrain_fraction", "must be in (0, 1]");
    }
  }
  {
    Section s = top.section("pruning");
    const auto& ratios = s.require("layer_ratios");
    if (!ratios.is_array()) throw PlanError(Kind::kTypeError, "pruning.layer_ratios", "expected an array of numbers");
    for (std::size_t i = 0; i < ratios.size(); ++i) {
      p.pruning.layer_ratios.push_back(
          Section::as_double(ratios[i], "pruning.layer_ratios[" + std::to_string(i) + "]"));
    }
    const std::string mode = s.get_string("mode", "exhaustive");
    if (mode == "exhaustive") {
      p.pruning.mode = SearchMode::kExhaustive;
    } else if (mode == "sample") {
      p.pruning.mode = SearchMode::kSample;
    } else {
      throw PlanError(Kind::kInvalid, "pruning.mode", "must be \"exhaustive\" or \"sample\", got \"" + mode + "\"");
    }
    p.pruning.sample_count = s.get_uint("sample_count", 0);
    p.pruning.sample_seed = s.get_uint("sample_seed", 0);
    p.pruning.exhaustive_cap = s.get_double("exhaustive_cap", p.pruning.exhaustive_cap);
    s.finish();
    at_path("pruning.layer_ratios",
            [&] { removal_counts(prunable_widths(build_lenet5_mini(p.variant)), p.pruning); });
    if (p.pruning.mode == SearchMode::kSample && p.pruning.sample_count == 0) {
      throw PlanError(Kind::kInvalid, "pruning.sample_count", "sample mode needs a positive count");
    }
    if (!(p.pruning.exhaustive_cap >= 1.0)) throw PlanError(Kind::kInvalid, "pruning.exhaustive_cap", "must be >= 1");
  }
  {
    Section s = top.section("analysis");
    const std::string metric = s.get_string("metric", "acc");
    at_path("analysis.metric", [&] { p.metric = parse_metric(metric); });
    s.finish();
  }
  top.finish();
  at_path("plan", [&] { p.validate(); });
  return p;
}

ExperimentPlan parse_plan(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read plan file " + path.string(), true);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_plan_text(ss.str());
}

std::string serialize_plan(const ExperimentPlan& p) {
  ordered_json root;
  root["dataset"] = {{"name", p.dataset}, {"train_subset", p.train_subset}, {"test_subset", p.test_subset}};
  root["model"] = {{"variant", p.variant.name()}, {"base_seed", p.base_seed}};
  root["pretrain"] = train_json(p.pretrain);
  ordered_json retrain = {{"repeats", p.repeats}, {"retrain_fraction", p.retrain_fraction}};
  const ordered_json train = train_json(p.retrain);
  for (const auto& [k, v] : train.items()) retrain[k] = v;
  root["retrain"] = retrain;
  root["pruning"] = {{"layer_ratios", p.pruning.layer_ratios},
                     {"mode", p.pruning.mode == SearchMode::kExhaustive ? "exhaustive" : "sample"},
                     {"sample_count", p.pruning.sample_count},
                     {"sample_seed", p.pruning.sample_seed},
                     {"exhaustive_cap", p.pruning.exhaustive_cap}};
  root["analysis"] = {{"metric", to_string(p.metric)}};
  return root.dump(2) + "\n";
}

}  // namespace prune_audit
