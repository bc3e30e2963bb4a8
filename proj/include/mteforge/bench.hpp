#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mteforge/corpus.hpp"

namespace mteforge::bench {

using ScoreMap = std::map<std::string, double>;

struct MetricRun {
  std::string metric_name;
  std::string lp;
  ScoreMap scores;
  std::map<std::string, std::set<std::string>> flags;
  std::map<std::string, std::string> metadata;
};

// "record_id\tscore" with a header row. Extra columns are ignored.
// Throws MalformedRecord.
MetricRun read_run_tsv(std::istream& in, const std::string& metric_name);
MetricRun read_run_tsv(const std::filesystem::path& path);
void write_run_tsv(std::ostream& out, const MetricRun& run);

// Splits a multi-LP run using each record's language pair; ids without a
// known LP are dropped.
std::vector<MetricRun> split_run_by_lp(
    const MetricRun& run, const std::map<std::string, std::string>& lp_of);

struct Correlations {
  double spearman = 0;
  double pearson = 0;
  std::size_t n = 0;
};

// Correlations over the shared ids. Throws InsufficientOverlap (< 3 ids).
Correlations evaluate_run(const MetricRun& run, const ScoreMap& human_z);

enum class Stat { Spearman, Pearson };
std::string_view to_string(Stat s);

struct BenchCell {
  std::optional<Correlations> value;
  std::string reason;  // why the cell is empty

  std::optional<double> get(Stat s) const;
};

struct AverageCell {
  std::optional<double> spearman;
  std::optional<double> pearson;
  std::size_t lps_used = 0;
  bool partial = false;  // some LP cells were missing

  std::optional<double> get(Stat s) const {
    return s == Stat::Spearman ? spearman : pearson;
  }
};

struct BenchReport {
  std::vector<std::string> lps;      // row order (sorted)
  std::vector<std::string> metrics;  // column order (first appearance)
  std::map<std::pair<std::string, std::string>, BenchCell> cells;  // (lp, metric)
  std::map<std::string, AverageCell> average;
  std::map<std::string, std::string> metadata;

  const BenchCell& cell(const std::string& lp, const std::string& metric) const;
  // Metrics holding the row maximum (ties keep all). Row "" is the average.
  std::set<std::string> best(const std::string& lp, Stat s) const;

  std::string to_tsv(Stat s) const;
  std::string to_text() const;
};

// human_z is keyed by LP. Cells that cannot be computed stay empty with a
// reason; averages are unweighted means over the available LP cells.
BenchReport benchmark_report(const std::vector<MetricRun>& runs,
                             const std::map<std::string, ScoreMap>& human_z);

// Writes report_spearman.tsv, report_pearson.tsv and report.txt.
void write_report(const std::filesystem::path& dir, const BenchReport& report);

struct ErrorCorrelationRow {
  std::string label;  // category name or "Total"
  std::optional<double> spearman;
  std::optional<double> kendall;
  std::string reason;
};

// Spearman and Kendall tau-b between per-record span counts and z_score,
// one row per category then the total. Constant count vectors leave the
// row blank. Throws MissingLabel when a record has no z_score.
std::vector<ErrorCorrelationRow> error_score_correlation(
    const std::vector<corpus::AnnotationRecord>& records);
std::string error_correlation_tsv(const std::vector<ErrorCorrelationRow>& rows);

// (lp, mt_system) -> mean raw DA.
std::map<std::pair<std::string, std::string>, double> system_quality_summary(
    const std::vector<corpus::AnnotationRecord>& records);
// Rows are systems, columns language pairs; missing cells are blank.
std::string system_quality_tsv(
    const std::map<std::pair<std::string, std::string>, double>& summary);

}  // namespace mteforge::bench
