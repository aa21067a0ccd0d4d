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

#include "prune_audit/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "prune_audit/model_zoo.hpp"

namespace prune_audit {

namespace {

std::string full(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

const std::vector<double>& per_repeat(const RunRecord& r, Metric m) {
  return m == Metric::kAccuracy ? r.test_accuracy : r.test_loss;
}

std::vector<RunRecord> successful(const std::vector<RunRecord>& records) {
  std::vector<RunRecord> out;
  for (const auto& r : records) {
    if (r.ok) out.push_back(r);
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string format_ratio(double r) {
  std::string s = fixed(r, 4);
  while (s.back() == '0') s.pop_back();
  if (s.back() == '.') s.pop_back();
  return s;
}

}  // namespace

std::string scatter_csv(const std::vector<RunRecord>& records, Metric metric) {
  const auto ok = successful(records);
  std::size_t repeats = 0;
  for (const auto& r : ok) repeats = std::max(repeats, per_repeat(r, metric).size());
  std::string out = "combination,pruned_train_loss,metric_mean";
  for (std::size_t i = 0; i < repeats; ++i) out += ",metric_r" + std::to_string(i);
  out += '\n';
  for (const auto& r : ok) {
    out += '"' + r.combination + "\"," + full(r.pruned_train_loss) + ',' +
           full(metric == Metric::kAccuracy ? r.mean_test_accuracy : r.mean_test_loss);
    const auto& vals = per_repeat(r, metric);
    for (std::size_t i = 0; i < repeats; ++i) out += ',' + (i < vals.size() ? full(vals[i]) : std::string());
    out += '\n';
  }
  return out;
}

std::string scatter_svg(const std::vector<RunRecord>& records, Metric metric, const std::string& title) {
  const auto ok = successful(records);
  const auto obs = to_observations(ok);
  constexpr double kW = 640, kH = 480, kLeft = 70, kRight = 20, kTop = 40, kBottom = 60;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;

  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!obs.empty()) {
    x0 = x1 = obs[0].pruned_train_loss;
    y0 = y1 = metric_value(obs[0], metric);
    for (const auto& o : obs) {
      x0 = std::min(x0, o.pruned_train_loss);
      x1 = std::max(x1, o.pruned_train_loss);
      y0 = std::min(y0, metric_value(o, metric));
      y1 = std::max(y1, metric_value(o, metric));
    }
  }
  const auto pad = [](double& lo, double& hi) {
    const double span = hi - lo;
    const double m = span > 0 ? 0.05 * span : (std::abs(lo) > 0 ? 0.05 * std::abs(lo) : 0.5);
    lo -= m;
    hi += m;
  };
  pad(x0, x1);
  pad(y0, y1);
  const auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  const auto py = [&](double y) { return kTop + ph - (y - y0) / (y1 - y0) * ph; };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" viewBox=\"0 0 " << kW
    << ' ' << kH << "\">\n";
  s << "<style>.anomaly{fill:#d62728}.normal{fill:#2ca02c}.oracle{fill:#1f77b4;stroke:#000;stroke-width:0.5}"
       ".axis{stroke:#000;stroke-width:1}.tick{font:11px sans-serif}.label{font:13px sans-serif}</style>\n";
  s << "<rect x=\"0\" y=\"0\" width=\"" << kW << "\" height=\"" << kH << "\" fill=\"#fff\"/>\n";
  if (!title.empty()) {
    s << "<text class=\"label\" x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\">" << xml_escape(title)
      << "</text>\n";
  }
  s << "<line class=\"axis\" x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw << "\" y2=\""
    << kTop + ph << "\"/>\n";
  s << "<line class=\"axis\" x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + ph
    << "\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double xv = x0 + (x1 - x0) * t / 4.0, yv = y0 + (y1 - y0) * t / 4.0;
    s << "<text class=\"tick\" x=\"" << fixed(px(xv), 2) << "\" y=\"" << kTop + ph + 16
      << "\" text-anchor=\"middle\">" << fixed(xv, 4) << "</text>\n";
    s << "<text class=\"tick\" x=\"" << kLeft - 6 << "\" y=\"" << fixed(py(yv) + 4, 2) << "\" text-anchor=\"end\">"
      << fixed(yv, 2) << "</text>\n";
  }
  s << "<text class=\"label\" x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 16
    << "\" text-anchor=\"middle\">Pruned train loss</text>\n";
  s << "<text class=\"label\" transform=\"translate(18," << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << (metric == Metric::kAccuracy ? "Final test accuracy (%)" : "Final test loss") << "</text>\n";

  if (!obs.empty()) {
    const std::size_t oracle = oracle_index(obs);
    const double oracle_value = metric_value(obs[oracle], metric);
    for (std::size_t i = 0; i < obs.size(); ++i) {
      if (i == oracle) continue;
      const bool anomaly = strictly_better(metric_value(obs[i], metric), oracle_value, metric);
      s << "<circle class=\"point " << (anomaly ? "anomaly" : "normal") << "\" data-id=\""
        << xml_escape(obs[i].id) << "\" cx=\"" << fixed(px(obs[i].pruned_train_loss), 2) << "\" cy=\""
        << fixed(py(metric_value(obs[i], metric)), 2) << "\" r=\"3.5\"/>\n";
    }
    // Star drawn last so it sits on top.
    const double cx = px(obs[oracle].pruned_train_loss), cy = py(oracle_value);
    s << "<polygon class=\"point oracle\" data-id=\"" << xml_escape(obs[oracle].id) << "\" points=\"";
    for (int k = 0; k < 10; ++k) {
      const double rad = (k % 2 == 0) ? 9.0 : 3.8;
      const double a = -std::numbers::pi / 2 + k * std::numbers::pi / 5;
      s << (k ? " " : "") << fixed(cx + rad * std::cos(a), 2) << ',' << fixed(cy + rad * std::sin(a), 2);
    }
    s << "\"/>\n";
  }
  s << "<g class=\"legend\">\n";
  const double lx = kLeft + pw - 150, ly = kTop + 10;
  s << "<rect x=\"" << lx - 8 << "\" y=\"" << ly - 8 << "\" width=\"150\" height=\"58\" fill=\"#fff\" stroke=\"#999\"/>\n";
  s << "<circle class=\"anomaly\" cx=\"" << lx << "\" cy=\"" << ly + 4 << "\" r=\"3.5\"/><text class=\"tick\" x=\""
    << lx + 10 << "\" y=\"" << ly + 8 << "\">better than oracle</text>\n";
  s << "<circle class=\"normal\" cx=\"" << lx << "\" cy=\"" << ly + 22 << "\" r=\"3.5\"/><text class=\"tick\" x=\""
    << lx + 10 << "\" y=\"" << ly + 26 << "\">not better</text>\n";
  s << "<rect class=\"oracle\" x=\"" << lx - 3.5 << "\" y=\"" << ly + 36.5 << "\" width=\"7\" height=\"7\"/>"
    << "<text class=\"tick\" x=\"" << lx + 10 << "\" y=\"" << ly + 44 << "\">oracle</text>\n";
  s << "</g>\n</svg>\n";
  return s.str();
}

void emit_scatter(const std::vector<RunRecord>& records, Metric metric, const std::filesystem::path& stem,
                  const std::string& title) {
  if (successful(records).empty()) throw Error("emit_scatter: no successful records", true);
  write_text(std::filesystem::path(stem.string() + ".csv"), scatter_csv(records, metric));
  write_text(std::filesystem::path(stem.string() + ".svg"), scatter_svg(records, metric, title));
}

std::string summary_cell(double tau, double p, Verdict verdict) {
  char pbuf[32];
  std::snprintf(pbuf, sizeof(pbuf), "%.1e", p);
  std::string cell = fixed(tau, 2) + " / " + pbuf;
  if (verdict == Verdict::kInvalid) cell += " (x)";
  return cell;
}

std::string summary_table(const std::vector<SummaryEntry>& entries) {
  std::vector<std::string> rows, cols;
  std::map<std::pair<std::string, std::string>, std::string> cells;
  for (const auto& e : entries) {
    if (std::find(rows.begin(), rows.end(), e.row) == rows.end()) rows.push_back(e.row);
    if (std::find(cols.begin(), cols.end(), e.column) == cols.end()) cols.push_back(e.column);
    const auto& k = e.report.selected();
    cells[{e.row, e.column}] = summary_cell(k.tau, k.p_value, e.report.verdict);
  }
  std::size_t w0 = 6;
  for (const auto& r : rows) w0 = std::max(w0, r.size());
  std::vector<std::size_t> widths;
  for (const auto& c : cols) {
    std::size_t w = c.size();
    for (const auto& r : rows) {
      const auto it = cells.find({r, c});
      if (it != cells.end()) w = std::max(w, it->second.size());
    }
    widths.push_back(w);
  }
  const auto pad = [](const std::string& s, std::size_t w) { return s + std::string(w - s.size(), ' '); };
  std::ostringstream out;
  out << "Kendall tau / p-value (pruned train loss vs final test "
      << (entries.empty() || entries[0].report.metric == Metric::kAccuracy ? "accuracy" : "loss") << ")\n\n";
  out << pad("Layers", w0);
  for (std::size_t c = 0; c < cols.size(); ++c) out << " | " << pad(cols[c], widths[c]);
  out << '\n' << std::string(w0, '-');
  for (std::size_t c = 0; c < cols.size(); ++c) out << "-+-" << std::string(widths[c], '-');
  out << '\n';
  for (const auto& r : rows) {
    out << pad(r, w0);
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const auto it = cells.find({r, cols[c]});
      out << " | " << pad(it == cells.end() ? "-" : it->second, widths[c]);
    }
    out << '\n';
  }
  out << "\n(x) = invalid: needs p < 0.05 and tau < -0.2 (accuracy) or tau > 0.2 (loss)\n";

  std::vector<std::string> notes;
  for (const auto& e : entries) {
    if (e.report.n_failed > 0) {
      notes.push_back(e.row + " @ " + e.column + ": " + std::to_string(e.report.n_failed) +
                      " failed combination(s) excluded from the statistics");
    }
    if (e.report.n + e.report.n_failed == 252) {
      notes.push_back(e.row + " @ " + e.column +
                      ": exhaustive enumeration of C(10,5) gives 252 combinations; a count of 256 cannot be an "
                      "exhaustive sweep of 5 out of 10 filters");
    }
    for (const auto& n : e.report.notes) notes.push_back(e.row + " @ " + e.column + ": " + n);
  }
  notes.push_back(topology_note());
  out << "\nNotes:\n";
  for (const auto& n : notes) out << "- " << n << '\n';
  return out.str();
}

std::string summary_csv(const std::vector<SummaryEntry>& entries) {
  std::string out = "row,column,metric,tau,p_value,n,n_failed,anomaly_ratio,counterexample_ratio,verdict\n";
  for (const auto& e : entries) {
    const auto& k = e.report.selected();
    out += '"' + e.row + "\",\"" + e.column + "\"," + to_string(e.report.metric) + ',' + full(k.tau) + ',' +
           full(k.p_value) + ',' + std::to_string(e.report.n) + ',' + std::to_string(e.report.n_failed) + ',' +
           full(e.report.anomaly_ratio) + ',' + full(e.report.counterexamples.ratio) + ',' +
           to_string(e.report.verdict) + '\n';
  }
  return out;
}

std::vector<SummaryCsvRow> parse_summary_csv(const std::string& text) {
  std::vector<SummaryCsvRow> out;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string cur;
    bool quoted = false;
    for (char c : line) {
      if (c == '"') {
        quoted = !quoted;
      } else if (c == ',' && !quoted) {
        f.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    f.push_back(cur);
    if (f.size() != 10) throw Error("summary csv: expected 10 fields, got " + std::to_string(f.size()), true);
    SummaryCsvRow r;
    r.row = f[0];
    r.column = f[1];
    r.metric = parse_metric(f[2]);
    r.tau = std::stod(f[3]);
    r.p_value = std::stod(f[4]);
    r.n = std::stoul(f[5]);
    r.n_failed = std::stoul(f[6]);
    r.anomaly_ratio = std::stod(f[7]);
    r.counterexample_ratio = std::stod(f[8]);
    r.verdict = f[9] == "valid" ? Verdict::kValid : Verdict::kInvalid;
    out.push_back(r);
  }
  return out;
}

void emit_summary(const std::vector<SummaryEntry>& entries, const std::filesystem::path& dir) {
  write_text(dir / "summary.txt", summary_table(entries));
  write_text(dir / "summary.csv", summary_csv(entries));
}

std::pair<std::string, std::string> plan_labels(const ExperimentPlan& plan) {
  const NetworkSpec spec = build_lenet5_mini(plan.variant);
  std::vector<std::string> names;
  std::size_t conv = 0, fc = 0;
  for (std::size_t i : prunable_layers(spec)) {
    names.push_back(std::holds_alternative<Conv2d>(spec.layers[i]) ? "Conv" + std::to_string(++conv)
                                                                   : "FC" + std::to_string(++fc));
  }
  std::string row, col;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < plan.pruning.layer_ratios.size(); ++i) {
    const double r = plan.pruning.layer_ratios[i];
    if (r == 0.0) continue;
    row += (row.empty() ? "" : "+") + names.at(i);
    const std::string rs = format_ratio(r);
    if (seen.insert(rs).second) col += (col.empty() ? "" : "/") + rs;
  }
  if (row.empty()) row = "none";
  if (col.empty()) col = "0";
  return {row, col};
}

}  // namespace prune_audit
