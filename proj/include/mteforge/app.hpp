#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mteforge/agreement.hpp"
#include "mteforge/corpus.hpp"
#include "mteforge/estimator.hpp"
#include "mteforge/judge.hpp"

namespace mteforge::app {

namespace fs = std::filesystem;

std::string sha256_hex(std::string_view bytes);
// Throws IoError.
std::string sha256_file(const fs::path& path);

// Bookkeeping for one command or pipeline stage: which files it read and
// wrote (with content hashes), the seed it used and the choices it made.
struct RunContext {
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // path -> sha256
  std::vector<std::string> decisions;
  // Manifest paths: relative to `base` when inside it, otherwise relative
  // to `source_base` (the config directory) when set.
  std::optional<fs::path> base;
  std::optional<fs::path> source_base;

  void read(const fs::path& p);
  void wrote(const fs::path& p);
  void decide(std::string what) { decisions.push_back(std::move(what)); }
  std::string display(const fs::path& p) const;

  nlohmann::ordered_json manifest(const std::string& stage,
                                  const nlohmann::json& params) const;
};

// Writes `body` to `path` (creating parent directories) and records it.
void write_file(RunContext& ctx, const fs::path& path, std::string_view body);

std::vector<corpus::AnnotationRecord> read_records(RunContext& ctx,
                                                   const fs::path& path);
void write_records(RunContext& ctx, const fs::path& path,
                   const std::vector<corpus::AnnotationRecord>& records);

// ---------------------------------------------------------------------------
// Commands. Subcommands and pipeline stages both go through these.

struct IngestOptions {
  corpus::Format format = corpus::Format::Jsonl;
  bool lenient = false;
  bool dedup = false;
};
std::vector<corpus::AnnotationRecord> cmd_ingest(RunContext& ctx,
                                                 const fs::path& in,
                                                 const fs::path& out,
                                                 const IngestOptions& opt);

enum class LexMetric { Chrf, ChrfPlusPlus, Bleu };
std::optional<LexMetric> parse_lex_metric(std::string_view s);
std::string_view to_string(LexMetric m);
// One score per record of mt_output against its reference; BLEU is the
// single-sentence corpus score.
void cmd_lexscore(RunContext& ctx, LexMetric metric, const fs::path& records,
                  const fs::path& out);
// Plain-text variant: one segment per line, ids are 1-based line numbers.
void cmd_lexscore_text(RunContext& ctx, LexMetric metric, const fs::path& hyp,
                       const fs::path& ref, const fs::path& out);

// Items scored by exactly two evaluators of a language pair.
std::vector<corpus::AnnotationRecord> find_overlap(
    const std::vector<corpus::AnnotationRecord>& records);

// Agreement per language pair over its overlap set. Writes the reports as a
// JSON array and, when `overlap_ids_out` is set, the overlap record ids.
std::vector<agreement::AgreementReport> cmd_agree(
    RunContext& ctx, const fs::path& in, const fs::path& out_json,
    const std::optional<fs::path>& overlap_ids_out,
    const std::set<std::string>& force_include);
nlohmann::ordered_json to_json(const agreement::AgreementReport& r);

// Writes z_score and scaled_score; bounds go to `bounds_out` as JSON.
void cmd_normalize(RunContext& ctx, const fs::path& in, const fs::path& out,
                   const fs::path& bounds_out, std::size_t extremes);

// Writes every heuristic flag; with `drop_low_score_no_spans` the records
// carrying LowScoreNoSpans are left out of `out`.
void cmd_qa_flags(RunContext& ctx, const fs::path& in, const fs::path& out,
                  const fs::path& summary, bool drop_low_score_no_spans);
void cmd_qa_crossfilter(RunContext& ctx, const fs::path& in, const fs::path& out,
                        const fs::path& summary, double q);
// Evaluator scores come from the records; silver from a run TSV.
void cmd_qa_silver(RunContext& ctx, const fs::path& in, const fs::path& silver,
                   const fs::path& summary);
// Throws Unreachable after writing the audit log of the failed attempt.
void cmd_qa_greedy(RunContext& ctx, const fs::path& in,
                   const std::vector<fs::path>& silver, double threshold,
                   const fs::path& out, const fs::path& audit);

struct SplitCommand {
  fs::path in;
  std::optional<fs::path> overlap;  // one record id per line
  std::size_t test_docs = 40;
  std::size_t dev_docs = 10;
  std::set<std::string> train_only_lps;
  fs::path out;  // assignment TSV
  // When set, train.jsonl / dev.jsonl / test.jsonl are written here.
  std::optional<fs::path> records_dir;
};
void cmd_split(RunContext& ctx, const SplitCommand& c);

void cmd_pseudo_embed(RunContext& ctx, const fs::path& in, std::size_t dim,
                      const fs::path& out);

estimator::TrainResult cmd_train(RunContext& ctx, const fs::path& data,
                                 const fs::path& emb,
                                 const estimator::TrainConfig& cfg,
                                 const fs::path& out_params,
                                 const std::optional<fs::path>& loss_log);
void cmd_score(RunContext& ctx, estimator::Mode mode, const fs::path& params,
               const fs::path& data, const fs::path& emb, const fs::path& out);

// Demonstrations are selected per language pair from `train`. Writes the
// judge TSV (record_id, score, flags, raw) and one raw response file per
// record under raw_dir; `run_out` optionally receives a plain run TSV.
void cmd_judge(RunContext& ctx, judge::Provider& provider,
               const judge::JudgeConfig& cfg, const fs::path& train,
               const fs::path& test, const fs::path& out,
               const fs::path& raw_dir, const std::optional<fs::path>& run_out);

// Human side: z-standardized test records. Runs: every *.tsv in runs_dir.
void cmd_bench(RunContext& ctx, const fs::path& human, const fs::path& runs_dir,
               const fs::path& out_dir);

// ---------------------------------------------------------------------------

struct StageFailure : Error {
  StageFailure(const std::string& stage, const std::string& message)
      : Error(stage, message), stage_name(stage) {}
  std::string stage_name;
};

struct PipelineOptions {
  std::optional<fs::path> out_dir;  // overrides the config
  std::optional<std::uint64_t> seed;
  // Judge stages use this instead of an HTTP provider when set.
  judge::Provider* provider = nullptr;
};

// Runs the stages listed in the config in order. Throws StageFailure naming
// the first stage that fails; artifacts of earlier stages stay on disk.
void run_pipeline(const fs::path& config, const PipelineOptions& options = {});

// Entry point of the mteforge binary.
int run_cli(int argc, char** argv);

}  // namespace mteforge::app
