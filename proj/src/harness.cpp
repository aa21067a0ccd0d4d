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

#include "prune_audit/harness.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "prune_audit/checkpoint.hpp"

namespace prune_audit {

void ExperimentPlan::validate() const {
  if (dataset.empty()) throw Error("dataset name is empty", true);
  variant.validate();
  pretrain.validate(false);
  retrain.validate(true);
  if (repeats < 1) throw Error("repeats must be at least 1", true);
  if (!(retrain_fraction > 0.0 && retrain_fraction <= 1.0)) throw Error("retrain_fraction must be in (0, 1]", true);
  removal_counts(prunable_widths(build_lenet5_mini(variant)), pruning);
  if (pruning.mode == SearchMode::kSample && pruning.sample_count == 0) {
    throw Error("sample mode needs a positive sample count", true);
  }
  if (!(pruning.exhaustive_cap >= 1.0)) throw Error("exhaustive cap must be at least 1", true);
}

TrainConfig partial_retrain_fraction(const TrainConfig& config, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error("retrain fraction must be in (0, 1]", true);
  if (fraction == 1.0) return config;
  const auto half_up = [&](std::size_t v) {
    return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(v) + 0.5 + 1e-9));
  };
  TrainConfig out = config;
  if (config.epochs > 0) out.epochs = std::max<std::size_t>(1, half_up(config.epochs));
  out.lr_schedule.clear();
  for (const auto& m : config.lr_schedule) {
    const LrMilestone scaled{half_up(m.start_epoch), m.learning_rate};
    // Milestones that collapse onto the same epoch: the later one wins.
    if (!out.lr_schedule.empty() && out.lr_schedule.back().start_epoch == scaled.start_epoch) {
      out.lr_schedule.back() = scaled;
    } else {
      out.lr_schedule.push_back(scaled);
    }
  }
  return out;
}

bool RunRecord::same_outcome(const RunRecord& o) const {
  return combination == o.combination && pruned_train_loss == o.pruned_train_loss && test_accuracy == o.test_accuracy &&
         test_loss == o.test_loss && mean_test_accuracy == o.mean_test_accuracy &&
         mean_test_loss == o.mean_test_loss && seeds == o.seeds && ok == o.ok && error == o.error;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

template <typename V>
std::string join(const std::vector<V>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ',';
    if constexpr (std::is_floating_point_v<V>) {
      s += fmt(values[i]);
    } else {
      s += std::to_string(values[i]);
    }
  }
  return s;
}

double parse_double(const std::string& s, const std::string& key) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw Error("registry: bad number for " + key + ": " + s, true);
  return v;
}

template <typename V>
std::vector<V> split_list(const std::string& s, const std::string& key) {
  std::vector<V> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = s.find(',', start);
    const std::string item = s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if constexpr (std::is_floating_point_v<V>) {
      out.push_back(parse_double(item, key));
    } else {
      V v{};
      const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      if (ec != std::errc() || p != item.data() + item.size()) throw Error("registry: bad integer for " + key, true);
      out.push_back(v);
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

}  // namespace

std::string format_record(const RunRecord& r) {
  std::string line;
  line += "combination=" + r.combination;
  line += "\tpruned_train_loss=" + fmt(r.pruned_train_loss);
  line += "\tfinal_test_accuracy=" + join(r.test_accuracy);
  line += "\tfinal_test_loss=" + join(r.test_loss);
  line += "\tmean_test_accuracy=" + fmt(r.mean_test_accuracy);
  line += "\tmean_test_loss=" + fmt(r.mean_test_loss);
  line += "\tseeds=" + join(r.seeds);
  line += "\twall_time_s=" + fmt(r.wall_time_s);
  line += std::string("\tstatus=") + (r.ok ? "ok" : "failed");
  if (!r.ok) line += "\terror=" + sanitize(r.error);
  return line;
}

RunRecord parse_record(const std::string& line) {
  std::map<std::string, std::string> fields;
  std::size_t start = 0;
  while (start <= line.size()) {
    const auto tab = line.find('\t', start);
    const std::string item = line.substr(start, tab == std::string::npos ? std::string::npos : tab - start);
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error("registry: field without '=': " + item, true);
    fields[item.substr(0, eq)] = item.substr(eq + 1);
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  const auto get = [&](const std::string& key) -> const std::string& {
    const auto it = fields.find(key);
    if (it == fields.end()) throw Error("registry: missing field " + key, true);
    return it->second;
  };
  RunRecord r;
  r.combination = get("combination");
  r.pruned_train_loss = parse_double(get("pruned_train_loss"), "pruned_train_loss");
  r.test_accuracy = split_list<double>(get("final_test_accuracy"), "final_test_accuracy");
  r.test_loss = split_list<double>(get("final_test_loss"), "final_test_loss");
  r.mean_test_accuracy = parse_double(get("mean_test_accuracy"), "mean_test_accuracy");
  r.mean_test_loss = parse_double(get("mean_test_loss"), "mean_test_loss");
  r.seeds = split_list<std::uint64_t>(get("seeds"), "seeds");
  r.wall_time_s = parse_double(get("wall_time_s"), "wall_time_s");
  const std::string& status = get("status");
  if (status != "ok" && status != "failed") throw Error("registry: bad status " + status, true);
  r.ok = status == "ok";
  if (!r.ok) r.error = fields.count("error") ? fields["error"] : "";
  return r;
}

std::vector<RunRecord> read_registry(const std::filesystem::path& path) {
  std::vector<RunRecord> out;
  std::ifstream in(path, std::ios::binary);
  if (!in) return out;
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t start = 0;
  for (;;) {
    const auto nl = text.find('\n', start);
    if (nl == std::string::npos) break;
    const std::string line = text.substr(start, nl - start);
    if (!line.empty()) out.push_back(parse_record(line));
    start = nl + 1;
  }
  return out;
}

void repair_registry(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return;
  std::ifstream in(path, std::ios::binary);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  if (text.empty() || text.back() == '\n') return;
  const auto nl = text.rfind('\n');
  std::filesystem::resize_file(path, nl == std::string::npos ? 0 : nl + 1);
}

void append_record(const std::filesystem::path& path, const RunRecord& r) {
  const std::string line = format_record(r) + "\n";
  const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644);
  if (fd < 0) throw Error("cannot open registry " + path.string());
  const ssize_t n = ::write(fd, line.data(), line.size());
  ::fsync(fd);
  ::close(fd);
  if (n != static_cast<ssize_t>(line.size())) throw Error("short write to registry " + path.string());
}

std::vector<Observation> to_observations(const std::vector<RunRecord>& records) {
  std::vector<Observation> out;
  for (const auto& r : records) {
    if (!r.ok) continue;
    out.push_back({r.combination, r.pruned_train_loss, r.mean_test_accuracy, r.mean_test_loss});
  }
  return out;
}

std::uint64_t run_seed(std::uint64_t base_seed, const std::string& combination, std::size_t repeat) {
  return mix_seed(mix_seed(base_seed, fnv1a(combination)), repeat);
}

SplitPair prepare_data(const ExperimentPlan& plan, const std::filesystem::path& root) {
  SplitPair raw = load_split(root, plan.dataset);
  if (plan.train_subset > 0 && plan.train_subset < raw.train.size()) {
    raw.train = subset(raw.train, plan.train_subset, mix_seed(plan.base_seed, 0x7472));
  }
  if (plan.test_subset > 0 && plan.test_subset < raw.test.size()) {
    raw.test = subset(raw.test, plan.test_subset, mix_seed(plan.base_seed, 0x7465));
  }
  auto [train, stats] = standardize(raw.train);
  auto [test, unused] = standardize(raw.test, stats);
  return {std::move(train), std::move(test)};
}

PretrainResult pretrain(const ExperimentPlan& plan, const SplitPair& data,
                        const std::optional<std::filesystem::path>& out_dir) {
  plan.validate();
  const FeatureShape input{1, data.train.images.dim(2), data.train.images.dim(3), false};
  PretrainResult result{init_network<float>(build_lenet5_mini(plan.variant, input), plan.base_seed), {}};
  TrainHooks hooks;
  hooks.on_epoch = [&](std::size_t, double train_loss) {
    result.log.emplace_back(train_loss, evaluate(result.net, data.test));
  };
  train(result.net, data.train, plan.pretrain, plan.base_seed, hooks);
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    save_checkpoint(result.net, *out_dir / "dense.ckpt");
    std::ofstream log(*out_dir / "pretrain_log.csv");
    log << "epoch,train_loss,test_accuracy,test_loss\n";
    for (std::size_t e = 0; e < result.log.size(); ++e) {
      log << e << ',' << fmt(result.log[e].first) << ',' << fmt(result.log[e].second.accuracy) << ','
          << fmt(result.log[e].second.loss) << '\n';
    }
  }
  return result;
}

RunRecord run_combination(const Network<float>& dense, const PruningCombination& combo, const ExperimentPlan& plan,
                          const SplitPair& data, const RunHooks& hooks) {
  const auto t0 = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.combination = combo.encode();
  const Network<float> pruned = apply_combination(dense, combo);
  rec.pruned_train_loss = pruned_train_loss(pruned, data.train);
  if (hooks.on_pruned_loss_measured) hooks.on_pruned_loss_measured();

  const TrainConfig config = partial_retrain_fraction(plan.retrain, plan.retrain_fraction);
  TrainHooks train_hooks;
  if (hooks.on_retrain_step) train_hooks.on_step = [&](std::size_t, std::size_t) { hooks.on_retrain_step(); };
  for (std::size_t r = 0; r < plan.repeats; ++r) {
    const std::uint64_t seed = run_seed(plan.base_seed, rec.combination, r);
    Network<float> net = pruned;
    train(net, data.train, config, seed, train_hooks);
    const EvalResult ev = evaluate(net, data.test);
    rec.seeds.push_back(seed);
    rec.test_accuracy.push_back(ev.accuracy);
    rec.test_loss.push_back(ev.loss);
  }
  double acc = 0.0, loss = 0.0;
  for (std::size_t r = 0; r < plan.repeats; ++r) {
    acc += rec.test_accuracy[r];
    loss += rec.test_loss[r];
  }
  rec.mean_test_accuracy = acc / static_cast<double>(plan.repeats);
  rec.mean_test_loss = loss / static_cast<double>(plan.repeats);
  rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

void sort_records(std::vector<RunRecord>& records) {
  std::map<std::string, PruningCombination> decoded;
  for (const auto& r : records) decoded.emplace(r.combination, PruningCombination::decode(r.combination));
  std::stable_sort(records.begin(), records.end(), [&](const RunRecord& a, const RunRecord& b) {
    return decoded.at(a.combination) < decoded.at(b.combination);
  });
}

SweepSummary sweep(const ExperimentPlan& plan, const Network<float>& dense, const SplitPair& data,
                   const SweepOptions& options) {
  plan.validate();
  if (options.workers == 0) throw Error("workers must be at least 1", true);
  const auto combos = enumerate_combinations(prunable_widths(dense.spec), plan.pruning);

  SweepSummary summary;
  std::set<std::string> done;
  if (std::filesystem::exists(options.registry) && std::filesystem::file_size(options.registry) > 0) {
    if (!options.resume) {
      throw Error("registry " + options.registry.string() + " already has records; pass --resume to continue", true);
    }
    repair_registry(options.registry);
    for (const auto& r : read_registry(options.registry)) done.insert(r.combination);
  }

  std::vector<const PruningCombination*> pending;
  for (const auto& c : combos) {
    if (done.count(c.encode())) {
      ++summary.skipped;
    } else {
      pending.push_back(&c);
    }
  }

  std::mutex writer;
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> appended{0};
  const auto worker = [&] {
    for (;;) {
      if (options.stop_after > 0 && appended.load() >= options.stop_after) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= pending.size()) return;
      RunRecord rec;
      try {
        rec = run_combination(dense, *pending[i], plan, data);
      } catch (const std::exception& e) {
        rec = RunRecord{};
        rec.combination = pending[i]->encode();
        rec.ok = false;
        rec.error = e.what();
      }
      std::lock_guard<std::mutex> lock(writer);
      if (options.stop_after > 0 && appended.load() >= options.stop_after) return;
      append_record(options.registry, rec);
      ++appended;
      if (options.on_record) options.on_record(rec);
    }
  };
  std::vector<std::thread> threads;
  const std::size_t n_threads = std::min(options.workers, std::max<std::size_t>(1, pending.size()));
  for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();

  summary.completed = appended.load();
  summary.records = read_registry(options.registry);
  sort_records(summary.records);
  for (const auto& r : summary.records) summary.failed += !r.ok;
  return summary;
}

}  // namespace prune_audit
