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

// prune-audit command line: pretrain, sweep, analyze, report, criteria.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "prune_audit/checkpoint.hpp"
#include "prune_audit/criteria.hpp"
#include "prune_audit/plan.hpp"
#include "prune_audit/report.hpp"

namespace fs = std::filesystem;
using namespace prune_audit;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

fs::path resolve_data_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const auto env = data_root_from_env()) return *env;
  throw Error("no dataset root: pass --data or set PRUNE_AUDIT_DATA", true);
}

fs::path default_work_dir(const fs::path& plan_path) {
  return plan_path.parent_path() / ("work-" + plan_path.stem().string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string(), true);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

// Copies the plan into the work dir; a different plan already there is an error.
void pin_plan(const ExperimentPlan& plan, const fs::path& work) {
  fs::create_directories(work);
  const fs::path pinned = work / "plan.json";
  const std::string text = serialize_plan(plan);
  if (fs::exists(pinned)) {
    if (!(parse_plan(pinned) == plan)) {
      throw Error("work dir " + work.string() + " belongs to a different plan; use another --work", true);
    }
    return;
  }
  write_text(pinned, text);
}

Network<float> ensure_dense(const ExperimentPlan& plan, const SplitPair& data, const fs::path& work) {
  const fs::path ckpt = work / "dense.ckpt";
  if (fs::exists(ckpt)) return load_checkpoint(ckpt);
  std::cerr << "pretraining " << plan.variant.name() << " on " << data.train.size() << " images\n";
  return pretrain(plan, data, work).net;
}

int cmd_pretrain(const std::string& plan_path, std::string work, const std::string& data_flag) {
  const ExperimentPlan plan = parse_plan(plan_path);
  const fs::path work_dir = work.empty() ? default_work_dir(plan_path) : fs::path(work);
  pin_plan(plan, work_dir);
  const SplitPair data = prepare_data(plan, resolve_data_root(data_flag));
  const auto result = pretrain(plan, data, work_dir);
  for (std::size_t e = 0; e < result.log.size(); ++e) {
    std::printf("epoch %zu  train_loss %.4f  test_acc %.2f%%  test_loss %.4f\n", e + 1, result.log[e].first,
                result.log[e].second.accuracy, result.log[e].second.loss);
  }
  std::printf("checkpoint: %s\n", (work_dir / "dense.ckpt").c_str());
  return 0;
}

int cmd_sweep(const std::string& plan_path, std::string work, const std::string& data_flag, std::size_t workers,
              bool resume) {
  const ExperimentPlan plan = parse_plan(plan_path);
  const fs::path work_dir = work.empty() ? default_work_dir(plan_path) : fs::path(work);
  pin_plan(plan, work_dir);
  const SplitPair data = prepare_data(plan, resolve_data_root(data_flag));
  const Network<float> dense = ensure_dense(plan, data, work_dir);
  SweepOptions opt;
  opt.workers = workers;
  opt.resume = resume;
  opt.registry = work_dir / "registry.txt";
  std::size_t done = 0;
  opt.on_record = [&](const RunRecord& r) {
    ++done;
    std::fprintf(stderr, "[%zu] %s loss=%.4f acc=%.2f%s\n", done, r.combination.c_str(), r.pruned_train_loss,
                 r.mean_test_accuracy, r.ok ? "" : " FAILED");
  };
  const SweepSummary s = sweep(plan, dense, data, opt);
  std::printf("registry: %s\nrecords: %zu  new: %zu  skipped: %zu  failed: %zu\n", opt.registry.c_str(),
              s.records.size(), s.completed, s.skipped, s.failed);
  return 0;
}

int cmd_analyze(const std::string& registry, const std::string& metric_text, std::string out) {
  const Metric metric = parse_metric(metric_text);
  if (!fs::exists(registry)) throw Error("registry not found: " + registry, true);
  auto records = read_registry(registry);
  sort_records(records);
  std::size_t failed = 0;
  for (const auto& r : records) failed += !r.ok;
  const auto obs = to_observations(records);
  if (obs.size() < 2) throw Error("need at least 2 successful records, got " + std::to_string(obs.size()), true);

  std::string label = fs::path(registry).stem().string();
  const fs::path plan_path = fs::path(registry).parent_path() / "plan.json";
  if (fs::exists(plan_path)) {
    const auto [row, col] = plan_labels(parse_plan(plan_path));
    label = row + " @ " + col;
  }
  const AnalysisReport report = analyze(obs, metric, label, failed);
  const fs::path out_dir = out.empty() ? fs::path(registry).parent_path() / ("analysis-" + std::string(to_string(metric)))
                                       : fs::path(out);
  fs::create_directories(out_dir);
  write_text(out_dir / "analysis.json", report_to_json(report));
  emit_scatter(records, metric, out_dir / "scatter", label);
  const auto& k = report.selected();
  std::printf("%s  n=%zu failed=%zu\ntau=%.4f p=%.3g (%s)  anomaly=%.4f  counterexamples=%zu/%zu  verdict=%s\n",
              label.c_str(), report.n, report.n_failed, k.tau, k.p_value, to_string(k.method), report.anomaly_ratio,
              report.counterexamples.counterexamples, report.counterexamples.total_pairs, to_string(report.verdict));
  std::printf("wrote %s\n", out_dir.c_str());
  return 0;
}

int cmd_report(const std::string& dir) {
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir, true);
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() == "analysis.json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error("no analysis.json under " + dir, true);
  std::vector<SummaryEntry> entries;
  for (const auto& f : files) {
    SummaryEntry e;
    e.report = report_from_json(read_text(f));
    const auto at = e.report.label.find(" @ ");
    e.row = at == std::string::npos ? e.report.label : e.report.label.substr(0, at);
    e.column = at == std::string::npos ? "-" : e.report.label.substr(at + 3);
    entries.push_back(std::move(e));
  }
  emit_summary(entries, dir);
  std::fputs(summary_table(entries).c_str(), stdout);
  return 0;
}

int cmd_criteria(const std::string& ckpt, const std::string& method, double sparsity, const std::string& data_flag,
                 const std::string& dataset, std::size_t batch) {
  const Network<float> net = load_checkpoint(ckpt);
  if (method == "l1" || method == "taylor") {
    ImportanceScores scores;
    if (method == "l1") {
      scores = score_l1_filters(net);
    } else {
      SplitPair data = load_split(resolve_data_root(data_flag), dataset);
      auto [train, stats] = standardize(data.train);
      const Dataset sample = subset(train, std::min(batch, train.size()), 0);
      scores = score_taylor1(net, sample.images, sample.labels);
    }
    std::fputs(scores_to_csv(scores).c_str(), stdout);
    return 0;
  }
  UnstructuredMask mask;
  if (method == "ump") {
    mask = mask_ump(net, sparsity);
  } else if (method == "gmp") {
    mask = mask_gmp(net, sparsity);
  } else if (method == "onp") {
    mask = mask_from_assignment(net, assign_ratios_onp(net, sparsity));
  } else if (method == "pnp") {
    mask = mask_from_assignment(net, assign_ratios_pnp(net, sparsity));
  } else {
    throw Error("unknown method \"" + method + "\" (l1, taylor, ump, gmp, onp, pnp)", true);
  }
  std::printf("layer,weights,removed,sparsity\n");
  for (std::size_t k = 0; k < mask.layers.size(); ++k) {
    const std::size_t n = mask.keep[k].size();
    const auto removed = static_cast<std::size_t>(std::count(mask.keep[k].begin(), mask.keep[k].end(), 0));
    std::printf("%zu,%zu,%zu,%.6f\n", mask.layers[k], n, removed, mask.layer_sparsity(k));
  }
  std::printf("total,%zu,%zu,%.6f\n", mask.total(), mask.zeros(), mask.sparsity());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prune-audit: oracle pruning validity experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string data_flag;
  app.add_option("--data", data_flag, "dataset root (default: $PRUNE_AUDIT_DATA)");

  std::string plan_path, work, registry, metric = "acc", out, dir, ckpt, method = "l1", dataset = "mnist";
  std::size_t workers = 1, batch = 256;
  bool resume = false;
  double sparsity = 0.4375;

  auto* pre = app.add_subcommand("pretrain", "train the dense model of a plan");
  pre->add_option("plan", plan_path, "plan file (JSON)")->required();
  pre->add_option("--work", work, "work directory (default: work-<plan> next to the plan)");

  auto* sw = app.add_subcommand("sweep", "prune and retrain every combination of a plan");
  sw->add_option("plan", plan_path, "plan file (JSON)")->required();
  sw->add_option("--work", work, "work directory (default: work-<plan> next to the plan)");
  sw->add_option("--workers", workers, "parallel jobs")->check(CLI::PositiveNumber);
  sw->add_flag("--resume", resume, "skip combinations already in the registry");

  auto* an = app.add_subcommand("analyze", "Kendall, anomaly and counterexample analysis of a registry");
  an->add_option("registry", registry, "registry file")->required();
  an->add_option("--metric", metric, "acc or loss");
  an->add_option("--out", out, "output directory (default: analysis-<metric> next to the registry)");

  auto* rp = app.add_subcommand("report", "summary table over analysis directories");
  rp->add_option("analysis-dir", dir, "directory searched for analysis.json files")->required();

  auto* cr = app.add_subcommand("criteria", "importance scores or sparsity masks for a checkpoint (CSV)");
  cr->add_option("checkpoint", ckpt, "dense checkpoint")->required();
  cr->add_option("--method", method, "l1, taylor, ump, gmp, onp or pnp");
  cr->add_option("--sparsity", sparsity, "target sparsity for mask methods");
  cr->add_option("--dataset", dataset, "dataset for taylor scores");
  cr->add_option("--batch", batch, "images used for taylor scores")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*pre) return cmd_pretrain(plan_path, work, data_flag);
    if (*sw) return cmd_sweep(plan_path, work, data_flag, workers, resume);
    if (*an) return cmd_analyze(registry, metric, out);
    if (*rp) return cmd_report(dir);
    if (*cr) return cmd_criteria(ckpt, method, sparsity, data_flag, dataset, batch);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.is_validation() ? kExitValidation : kExitRuntime;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return 0;
}
