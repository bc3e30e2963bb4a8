#include "mteforge/bench.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "mteforge/agreement.hpp"

namespace mteforge::bench {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

std::string cell_str(std::optional<double> v) {
  return v ? fmt::format("{:.6f}", *v) : std::string();
}

}  // namespace

MetricRun read_run_tsv(std::istream& in, const std::string& metric_name) {
  MetricRun run;
  run.metric_name = metric_name;
  std::string line;
  std::size_t line_no = 0;
  std::size_t id_col = 0, score_col = 1;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cols = split_tabs(line);
    if (header) {
      header = false;
      const auto id_it = std::find(cols.begin(), cols.end(), "record_id");
      const auto sc_it = std::find(cols.begin(), cols.end(), "score");
      if (id_it == cols.end() || sc_it == cols.end()) {
        throw MalformedRecord(line_no, "header must name record_id and score");
      }
      id_col = static_cast<std::size_t>(id_it - cols.begin());
      score_col = static_cast<std::size_t>(sc_it - cols.begin());
      continue;
    }
    if (cols.size() <= std::max(id_col, score_col)) {
      throw MalformedRecord(line_no, "missing columns");
    }
    double v = 0;
    try {
      std::size_t used = 0;
      v = std::stod(cols[score_col], &used);
      if (used != cols[score_col].size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw MalformedRecord(line_no, "score '" + cols[score_col] + "' is not a number");
    }
    if (!run.scores.emplace(cols[id_col], v).second) {
      throw MalformedRecord(line_no, "duplicate record_id '" + cols[id_col] + "'");
    }
  }
  return run;
}

MetricRun read_run_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return read_run_tsv(in, path.stem().string());
}

void write_run_tsv(std::ostream& out, const MetricRun& run) {
  out << "record_id\tscore\n";
  for (const auto& [id, v] : run.scores) out << id << '\t' << fmt::format("{:.9g}", v) << '\n';
}

std::vector<MetricRun> split_run_by_lp(
    const MetricRun& run, const std::map<std::string, std::string>& lp_of) {
  std::map<std::string, MetricRun> by_lp;
  for (const auto& [id, v] : run.scores) {
    auto it = lp_of.find(id);
    if (it == lp_of.end()) continue;
    auto& part = by_lp[it->second];
    if (part.metric_name.empty()) {
      part.metric_name = run.metric_name;
      part.lp = it->second;
      part.metadata = run.metadata;
    }
    part.scores[id] = v;
    if (auto f = run.flags.find(id); f != run.flags.end()) part.flags[id] = f->second;
  }
  std::vector<MetricRun> out;
  for (auto& [lp, part] : by_lp) out.push_back(std::move(part));
  return out;
}

Correlations evaluate_run(const MetricRun& run, const ScoreMap& human_z) {
  std::vector<double> metric, human;
  for (const auto& [id, v] : run.scores) {
    auto it = human_z.find(id);
    if (it == human_z.end()) continue;
    metric.push_back(v);
    human.push_back(it->second);
  }
  if (metric.size() < agreement::kMinPoints) {
    throw InsufficientOverlap(run.metric_name + " shares " +
                              std::to_string(metric.size()) +
                              " ids with the human scores, need 3");
  }
  return {agreement::spearman(metric, human), agreement::pearson(metric, human),
          metric.size()};
}

std::string_view to_string(Stat s) {
  return s == Stat::Spearman ? "spearman" : "pearson";
}

std::optional<double> BenchCell::get(Stat s) const {
  if (!value) return std::nullopt;
  return s == Stat::Spearman ? value->spearman : value->pearson;
}

const BenchCell& BenchReport::cell(const std::string& lp,
                                   const std::string& metric) const {
  return cells.at({lp, metric});
}

std::set<std::string> BenchReport::best(const std::string& lp, Stat s) const {
  std::optional<double> top;
  std::set<std::string> out;
  for (const auto& m : metrics) {
    const auto v = lp.empty() ? average.at(m).get(s) : cell(lp, m).get(s);
    if (!v) continue;
    if (!top || *v > *top) {
      top = v;
      out = {m};
    } else if (*v == *top) {
      out.insert(m);
    }
  }
  return out;
}

BenchReport benchmark_report(const std::vector<MetricRun>& runs,
                             const std::map<std::string, ScoreMap>& human_z) {
  BenchReport rep;
  std::set<std::string> lp_set;
  for (const auto& [lp, z] : human_z) lp_set.insert(lp);
  for (const auto& run : runs) {
    lp_set.insert(run.lp);
    if (std::find(rep.metrics.begin(), rep.metrics.end(), run.metric_name) ==
        rep.metrics.end()) {
      rep.metrics.push_back(run.metric_name);
    }
  }
  rep.lps.assign(lp_set.begin(), lp_set.end());
  for (const auto& lp : rep.lps) {
    for (const auto& m : rep.metrics) rep.cells[{lp, m}].reason = "no run";
  }

  for (const auto& run : runs) {
    auto& cell = rep.cells[{run.lp, run.metric_name}];
    if (cell.value || cell.reason != "no run") {
      throw DuplicateId("two runs for " + run.metric_name + " on " + run.lp);
    }
    cell.reason.clear();
    auto z = human_z.find(run.lp);
    if (z == human_z.end()) {
      cell.reason = "no human scores for " + run.lp;
      continue;
    }
    try {
      cell.value = evaluate_run(run, z->second);
    } catch (const Error& e) {
      cell.reason = e.what();
    }
  }

  for (const auto& m : rep.metrics) {
    AverageCell avg;
    double s = 0, p = 0;
    for (const auto& lp : rep.lps) {
      const auto& c = rep.cells.at({lp, m});
      if (!c.value) {
        avg.partial = true;
        continue;
      }
      s += c.value->spearman;
      p += c.value->pearson;
      ++avg.lps_used;
    }
    if (avg.lps_used > 0) {
      avg.spearman = s / static_cast<double>(avg.lps_used);
      avg.pearson = p / static_cast<double>(avg.lps_used);
    }
    rep.average[m] = avg;
  }
  rep.metadata["average"] = "unweighted mean over available language pairs";
  rep.metadata["human"] = "z-standardized test scores";
  return rep;
}

std::string BenchReport::to_tsv(Stat s) const {
  std::ostringstream os;
  os << "lp";
  for (const auto& m : metrics) os << '\t' << m;
  os << "\tbest\n";
  auto best_col = [&](const std::string& lp) {
    const auto b = best(lp, s);
    std::string joined;
    for (const auto& m : b) joined += (joined.empty() ? "" : ",") + m;
    return joined;
  };
  for (const auto& lp : lps) {
    os << lp;
    for (const auto& m : metrics) os << '\t' << cell_str(cell(lp, m).get(s));
    os << '\t' << best_col(lp) << '\n';
  }
  os << "Average";
  bool any_partial = false;
  for (const auto& m : metrics) {
    os << '\t' << cell_str(average.at(m).get(s));
    any_partial = any_partial || average.at(m).partial;
  }
  os << '\t' << best_col("") << '\n';
  if (any_partial) {
    os << "# average over available language pairs for:";
    for (const auto& m : metrics) {
      if (average.at(m).partial) os << ' ' << m;
    }
    os << '\n';
  }
  return os.str();
}

std::string BenchReport::to_text() const {
  std::ostringstream os;
  for (Stat s : {Stat::Spearman, Stat::Pearson}) {
    std::vector<std::vector<std::string>> grid;
    std::vector<std::string> head{"LP"};
    head.insert(head.end(), metrics.begin(), metrics.end());
    grid.push_back(head);
    auto row = [&](const std::string& label, const std::string& lp) {
      std::vector<std::string> r{label};
      const auto b = best(lp, s);
      for (const auto& m : metrics) {
        const auto v = lp.empty() ? average.at(m).get(s) : cell(lp, m).get(s);
        std::string txt = v ? fmt::format("{:.3f}", *v) : "-";
        if (v && b.count(m)) txt = "**" + txt + "**";
        if (lp.empty() && average.at(m).partial && v) txt += "*";
        r.push_back(txt);
      }
      grid.push_back(r);
    };
    for (const auto& lp : lps) row(lp, lp);
    row("Average", "");

    std::vector<std::size_t> width(grid.front().size(), 0);
    for (const auto& r : grid) {
      for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
    }
    os << (s == Stat::Spearman ? "Spearman" : "Pearson") << '\n';
    for (std::size_t k = 0; k < grid.size(); ++k) {
      if (k == grid.size() - 1) {
        std::size_t total = 0;
        for (auto w : width) total += w + 2;
        os << std::string(total - 2, '-') << '\n';
      }
      for (std::size_t i = 0; i < grid[k].size(); ++i) {
        if (i > 0) os << "  ";
        os << (i == 0 ? fmt::format("{:<{}}", grid[k][i], width[i])
                      : fmt::format("{:>{}}", grid[k][i], width[i]));
      }
      os << '\n';
    }
    os << '\n';
  }
  bool any_partial = false;
  for (const auto& m : metrics) any_partial = any_partial || average.at(m).partial;
  if (any_partial) os << "* averaged over the available language pairs only\n";
  for (const auto& [key, c] : cells) {
    if (!c.value) os << "missing " << key.second << " on " << key.first << ": " << c.reason << '\n';
  }
  return os.str();
}

void write_report(const std::filesystem::path& dir, const BenchReport& report) {
  std::filesystem::create_directories(dir);
  auto put = [&](const char* name, const std::string& body) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw IoError("cannot write '" + (dir / name).string() + "'");
    out << body;
  };
  put("report_spearman.tsv", report.to_tsv(Stat::Spearman));
  put("report_pearson.tsv", report.to_tsv(Stat::Pearson));
  put("report.txt", report.to_text());
}

std::vector<ErrorCorrelationRow> error_score_correlation(
    const std::vector<corpus::AnnotationRecord>& records) {
  std::vector<double> z;
  std::map<corpus::ErrorCategory, std::vector<double>> counts;
  std::vector<double> total;
  for (const auto& r : records) {
    if (!r.z_score) throw MissingLabel("record '" + r.record_id + "' has no z_score");
    z.push_back(*r.z_score);
    for (auto c : corpus::kAllCategories) counts[c].push_back(0.0);
    for (const auto& s : r.spans) counts[s.category].back() += 1.0;
    total.push_back(static_cast<double>(r.spans.size()));
  }
  auto make_row = [&](std::string label, const std::vector<double>& x) {
    ErrorCorrelationRow row{std::move(label), {}, {}, {}};
    try {
      row.spearman = agreement::spearman(x, z);
      row.kendall = agreement::kendall_tau_b(x, z);
    } catch (const Error& e) {
      row.spearman.reset();
      row.kendall.reset();
      row.reason = e.what();
    }
    return row;
  };
  std::vector<ErrorCorrelationRow> rows;
  for (auto c : corpus::kAllCategories) {
    rows.push_back(make_row(std::string(corpus::to_string(c)), counts[c]));
  }
  rows.push_back(make_row("Total", total));
  return rows;
}

std::string error_correlation_tsv(const std::vector<ErrorCorrelationRow>& rows) {
  std::ostringstream os;
  os << "category\tspearman\tkendall\tnote\n";
  for (const auto& r : rows) {
    os << r.label << '\t' << cell_str(r.spearman) << '\t' << cell_str(r.kendall)
       << '\t' << r.reason << '\n';
  }
  return os.str();
}

std::map<std::pair<std::string, std::string>, double> system_quality_summary(
    const std::vector<corpus::AnnotationRecord>& records) {
  std::map<std::pair<std::string, std::string>, std::pair<double, std::size_t>> acc;
  for (const auto& r : records) {
    auto& [sum, n] = acc[{r.lp.to_string(), r.mt_system}];
    sum += r.da_score;
    ++n;
  }
  std::map<std::pair<std::string, std::string>, double> out;
  for (const auto& [key, sn] : acc) out[key] = sn.first / static_cast<double>(sn.second);
  return out;
}

std::string system_quality_tsv(
    const std::map<std::pair<std::string, std::string>, double>& summary) {
  std::set<std::string> lps, systems;
  for (const auto& [key, v] : summary) {
    lps.insert(key.first);
    systems.insert(key.second);
  }
  std::ostringstream os;
  os << "mt_system";
  for (const auto& lp : lps) os << '\t' << lp;
  os << '\n';
  for (const auto& sys : systems) {
    os << sys;
    for (const auto& lp : lps) {
      auto it = summary.find({lp, sys});
      os << '\t' << (it == summary.end() ? "" : fmt::format("{:.4f}", it->second));
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace mteforge::bench
