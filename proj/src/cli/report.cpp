#include "viarl/cli/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>

#include "viarl/cli/commands.hpp"
#include "viarl/cli/config.hpp"
#include "viarl/cli/io.hpp"

namespace viarl::cli {
namespace fs = std::filesystem;
namespace {

const std::vector<std::pair<std::string, std::string>> kStepColumns = {
    {"mean_total_reward", "reward"}, {"format_rate", "format"},     {"index_rate", "index"},
    {"answer_rate", "answer"},       {"length_rate", "length"},     {"mean_abs_kl", "|kl|"},
    {"mean_think_length", "think"},  {"needle_recall", "recall"},
};

const std::vector<std::string> kEvalColumns = {"needle_recall", "answer_accuracy", "valid_rate", "temporal_recall",
                                               "temporal_accuracy"};

struct Run {
  fs::path dir;
  std::vector<json> steps;                      // rl_step / sft_step rows
  std::map<std::pair<long, long>, json> evals;  // (cycle, stage) -> heldout metrics
  std::optional<json> summary;
  std::string mode = "?";
};

std::string cell(const json& v) {
  if (v.is_null()) return "-";
  if (v.is_number_float()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v.get<double>());
    return buf;
  }
  return v.dump();
}

void print_row(std::ostream& out, const std::vector<std::string>& cells, std::size_t width = 12) {
  for (const auto& c : cells) {
    std::string s = c.size() >= width ? c.substr(0, width - 1) : c;
    out << s << std::string(width - s.size(), ' ');
  }
  out << "\n";
}

Run load_run(const fs::path& dir) {
  Run r;
  r.dir = dir;
  const fs::path metrics = dir / "metrics.jsonl";
  if (!fs::exists(metrics)) throw FormatError(metrics.string() + " not found");
  for (auto& row : read_jsonl(metrics)) {
    check_schema(row, metrics.string());
    const std::string kind = row.value("kind", "");
    if (kind == "eval") {
      r.evals[{row.value("cycle", 0L), row.value("stage", 0L)}] = row.at("heldout");
    } else {
      r.steps.push_back(std::move(row));
    }
  }
  if (fs::exists(dir / "summary.json")) {
    json s = read_json(dir / "summary.json");
    check_schema(s, (dir / "summary.json").string());
    r.mode = s.value("mode", "?");
    r.summary = std::move(s);
  } else if (!r.evals.empty()) {
    r.mode = "amplify";
  } else if (!r.steps.empty()) {
    r.mode = r.steps.front().value("kind", "") == "sft_step" ? "sft-selector" : "rl";
  }
  return r;
}

std::vector<std::size_t> sample_rows(std::size_t n, std::size_t max_rows) {
  std::vector<std::size_t> rows;
  if (n == 0) return rows;
  if (max_rows < 2 || n <= max_rows) {
    for (std::size_t i = 0; i < n; ++i) rows.push_back(i);
    return rows;
  }
  for (std::size_t k = 0; k < max_rows; ++k) rows.push_back(k * (n - 1) / (max_rows - 1));
  return rows;
}

void print_steps(std::ostream& out, const Run& r, std::size_t max_rows) {
  if (r.steps.empty()) return;
  const bool sft = r.steps.front().value("kind", "") == "sft_step";
  const bool staged = r.steps.front().contains("cycle");
  std::vector<std::string> head;
  if (staged) head.push_back("cycle");
  head.push_back("step");
  if (sft) {
    head.push_back("loss");
  } else {
    for (const auto& c : kStepColumns) head.push_back(c.second);
  }
  print_row(out, head, 10);
  for (const std::size_t i : sample_rows(r.steps.size(), max_rows)) {
    const json& s = r.steps[i];
    std::vector<std::string> row;
    if (staged) row.push_back(cell(s.value("cycle", json())));
    row.push_back(cell(s.value("step", json())));
    if (sft) {
      row.push_back(cell(s.value("loss", json())));
    } else {
      for (const auto& c : kStepColumns) row.push_back(cell(s.value(c.first, json())));
    }
    print_row(out, row, 10);
  }
}

void print_positions(std::ostream& out, const Run& r) {
  if (r.evals.empty()) return;
  std::vector<std::string> head = {"(i,j)"};
  head.insert(head.end(), kEvalColumns.begin(), kEvalColumns.end());
  print_row(out, head, 18);
  for (const auto& [pos, m] : r.evals) {
    std::vector<std::string> row = {"(" + std::to_string(pos.first) + "," + std::to_string(pos.second) + ")"};
    for (const auto& c : kEvalColumns) row.push_back(cell(m.value(c, json())));
    print_row(out, row, 18);
  }
}

// Held-out metrics at the end of the run, if any were recorded.
json final_heldout(const Run& r) {
  if (r.summary && r.summary->contains("heldout")) return (*r.summary)["heldout"];
  if (!r.evals.empty()) return r.evals.rbegin()->second;
  return json::object();
}

void print_run(std::ostream& out, const Run& r, std::size_t max_rows) {
  out << "== " << r.dir.string() << "  [" << r.mode << "]";
  if (r.summary) out << "  config " << r.summary->value("config_hash", "?");
  out << "\n";
  print_steps(out, r, max_rows);
  print_positions(out, r);
  const json h = final_heldout(r);
  if (!h.empty() && r.evals.empty()) {
    out << "heldout:";
    for (const auto& c : kEvalColumns) out << "  " << c << " " << cell(h.value(c, json()));
    out << "\n";
  }
  if (!r.summary) {
    out << "-- truncated: no summary.json, run stopped after " << r.steps.size() << " logged steps";
    if (!r.evals.empty()) {
      const auto& last = r.evals.rbegin()->first;
      out << " (last evaluated position (" << last.first << "," << last.second << "))";
    }
    out << " --\n";
  }
}

void print_side_by_side(std::ostream& out, const Run& a, const Run& b) {
  out << "== comparison\n";
  print_row(out, {"metric", a.dir.filename().string(), b.dir.filename().string()}, 20);
  const json ha = final_heldout(a), hb = final_heldout(b);
  for (const auto& c : kEvalColumns) print_row(out, {c, cell(ha.value(c, json())), cell(hb.value(c, json()))}, 20);
  if (!a.steps.empty() && !b.steps.empty()) {
    for (const auto& c : kStepColumns) {
      print_row(out, {"last " + c.second, cell(a.steps.back().value(c.first, json())),
                      cell(b.steps.back().value(c.first, json()))},
                20);
    }
  }
}

void write_csv(const fs::path& path, const std::vector<Run>& runs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "run,cycle,step";
  for (const auto& c : kStepColumns) out << "," << c.first;
  out << ",loss\n";
  for (const auto& r : runs) {
    for (const auto& s : r.steps) {
      out << r.dir.filename().string() << "," << s.value("cycle", 0) << "," << s.value("step", 0);
      for (const auto& c : kStepColumns) out << "," << (s.contains(c.first) ? s[c.first].dump() : "");
      out << "," << (s.contains("loss") ? s["loss"].dump() : "") << "\n";
    }
  }
}

}  // namespace

int cmd_report(const ReportOptions& opts, std::ostream& out, std::ostream& err) {
  std::vector<Run> runs;
  try {
    for (const auto& d : opts.runs) runs.push_back(load_run(d));
  } catch (const FormatError& e) {
    err << "report: " << e.what() << "\n";
    return kExitFailure;
  }
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (i > 0) out << "\n";
    print_run(out, runs[i], opts.max_rows);
  }
  if (runs.size() == 2) {
    out << "\n";
    print_side_by_side(out, runs[0], runs[1]);
  }
  if (!opts.csv.empty()) write_csv(opts.csv, runs);
  return kExitOk;
}

}  // namespace viarl::cli
