#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "mteforge/app.hpp"
#include "mteforge/bench.hpp"
#include "mteforge/lexmetrics.hpp"
#include "mteforge/normalize.hpp"
#include "mteforge/qa.hpp"
#include "mteforge/split.hpp"
#include "mteforge/text.hpp"

namespace mteforge::app {

using corpus::AnnotationRecord;
using nlohmann::json;
using nlohmann::ordered_json;

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("SHA-256 digest failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
  return hex;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

std::string RunContext::display(const fs::path& p) const {
  if (!base) return p.generic_string();
  const auto rel = fs::proximate(p, *base);
  const bool inside = rel.empty() || *rel.begin() != "..";
  if (inside || !source_base) return rel.generic_string();
  return fs::proximate(p, *source_base).generic_string();
}

void RunContext::read(const fs::path& p) { inputs[display(p)] = sha256_file(p); }
void RunContext::wrote(const fs::path& p) { outputs[display(p)] = sha256_file(p); }

ordered_json RunContext::manifest(const std::string& stage, const json& params) const {
  ordered_json m;
  m["stage"] = stage;
  m["seed"] = seed;
  m["params"] = params;
  m["inputs"] = inputs;
  m["outputs"] = outputs;
  m["decisions"] = decisions;
  return m;
}

void write_file(RunContext& ctx, const fs::path& path, std::string_view body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw IoError("write to '" + path.string() + "' failed");
  }
  ctx.wrote(path);
}

std::vector<AnnotationRecord> read_records(RunContext& ctx, const fs::path& path) {
  auto res = corpus::load_annotations(path, {});
  ctx.read(path);
  return std::move(res.records);
}

void write_records(RunContext& ctx, const fs::path& path,
                   const std::vector<AnnotationRecord>& records) {
  std::ostringstream os;
  corpus::save_annotations(os, records);
  write_file(ctx, path, os.str());
}

namespace {

std::string num(double v) { return fmt::format("{:.9g}", v); }

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

std::string scores_tsv(const std::map<std::string, double>& scores) {
  std::string out = "record_id\tscore\n";
  for (const auto& [id, v] : scores) out += id + "\t" + num(v) + "\n";
  return out;
}

std::map<std::string, double> load_score_file(RunContext& ctx, const fs::path& p) {
  auto run = bench::read_run_tsv(p);
  ctx.read(p);
  return run.scores;
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<AnnotationRecord> cmd_ingest(RunContext& ctx, const fs::path& in,
                                         const fs::path& out, const IngestOptions& opt) {
  auto res = corpus::load_annotations(in, {opt.format, opt.lenient});
  ctx.read(in);
  for (const auto& e : res.errors) {
    spdlog::warn("skipped line {}: {}", e.line, e.reason);
    ctx.decide(fmt::format("skipped line {}: {}", e.line, e.reason));
  }
  auto records = std::move(res.records);
  if (opt.dedup) {
    const auto before = records.size();
    records = corpus::deduplicate(records);
    ctx.decide(fmt::format("deduplicated {} -> {} records", before, records.size()));
  }
  write_records(ctx, out, records);
  spdlog::info("ingested {} records", records.size());
  return records;
}

std::optional<LexMetric> parse_lex_metric(std::string_view s) {
  if (s == "chrf") return LexMetric::Chrf;
  if (s == "chrfpp" || s == "chrf++") return LexMetric::ChrfPlusPlus;
  if (s == "bleu") return LexMetric::Bleu;
  return std::nullopt;
}

std::string_view to_string(LexMetric m) {
  switch (m) {
    case LexMetric::Chrf:
      return "chrf";
    case LexMetric::ChrfPlusPlus:
      return "chrfpp";
    case LexMetric::Bleu:
      return "bleu";
  }
  return "?";
}

namespace {

double lex_score(LexMetric m, const std::string& hyp, const std::string& ref) {
  switch (m) {
    case LexMetric::Chrf:
      return lex::chrf_sentence(hyp, ref, lex::ChrfConfig::chrf());
    case LexMetric::ChrfPlusPlus:
      return lex::chrf_sentence(hyp, ref, lex::ChrfConfig::chrf_plus_plus());
    case LexMetric::Bleu:
      return lex::bleu_corpus({hyp}, {ref});
  }
  return 0;
}

std::vector<std::string> read_lines(RunContext& ctx, const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open '" + p.string() + "'");
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  ctx.read(p);
  return lines;
}

void note_lex(RunContext& ctx, LexMetric metric) {
  if (metric == LexMetric::Bleu) {
    ctx.decide(fmt::format("bleu: sentence-level corpus BLEU, tokenizer {}",
                           lex::kBleuTokenizerName));
  } else {
    const auto cfg = metric == LexMetric::Chrf ? lex::ChrfConfig::chrf()
                                               : lex::ChrfConfig::chrf_plus_plus();
    ctx.decide(fmt::format("{}: char_order {}, word_order {}, beta {}",
                           to_string(metric), cfg.char_order, cfg.word_order, cfg.beta));
  }
}

}  // namespace

void cmd_lexscore(RunContext& ctx, LexMetric metric, const fs::path& records_path,
                  const fs::path& out) {
  const auto records = read_records(ctx, records_path);
  std::map<std::string, double> scores;
  for (const auto& r : records) {
    scores[r.record_id] = lex_score(metric, r.mt_output, r.require_reference());
  }
  note_lex(ctx, metric);
  write_file(ctx, out, scores_tsv(scores));
}

void cmd_lexscore_text(RunContext& ctx, LexMetric metric, const fs::path& hyp,
                       const fs::path& ref, const fs::path& out) {
  const auto hyps = read_lines(ctx, hyp);
  const auto refs = read_lines(ctx, ref);
  if (hyps.size() != refs.size()) {
    throw LengthMismatch(fmt::format("{} hypotheses, {} references", hyps.size(),
                                     refs.size()));
  }
  std::string body = "record_id\tscore\n";
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    body += std::to_string(i + 1) + "\t" + num(lex_score(metric, hyps[i], refs[i])) + "\n";
  }
  note_lex(ctx, metric);
  write_file(ctx, out, body);
}

// ---------------------------------------------------------------------------

std::vector<AnnotationRecord> find_overlap(const std::vector<AnnotationRecord>& records) {
  // (lp, item) -> evaluators
  std::map<std::pair<std::string, std::string>, std::set<std::string>> evaluators;
  for (const auto& r : records) {
    evaluators[{r.lp.to_string(), qa::item_key(r)}].insert(r.evaluator_id);
  }
  std::vector<AnnotationRecord> out;
  for (const auto& r : records) {
    if (evaluators.at({r.lp.to_string(), qa::item_key(r)}).size() == 2) out.push_back(r);
  }
  return out;
}

ordered_json to_json(const agreement::AgreementReport& r) {
  ordered_json j;
  j["lp"] = r.lp.to_string();
  j["n"] = r.n;
  j["k"] = r.k;
  j["pearson"] = r.pearson;
  j["spearman"] = r.spearman;
  j["kendall"] = r.kendall;
  j["icc3k"] = r.icc3k;
  j["gate"] = std::string(agreement::to_string(r.gate));
  j["included"] = r.included;
  j["rater_a"] = r.rater_a;
  j["rater_b"] = r.rater_b;
  return j;
}

std::vector<agreement::AgreementReport> cmd_agree(
    RunContext& ctx, const fs::path& in, const fs::path& out_json,
    const std::optional<fs::path>& overlap_ids_out,
    const std::set<std::string>& force_include) {
  const auto overlap = find_overlap(read_records(ctx, in));
  std::vector<agreement::AgreementReport> reports;
  ordered_json arr = ordered_json::array();
  for (const auto& [lp, recs] : corpus::group_by_lp(overlap)) {
    const bool force = force_include.count(lp.to_string()) > 0;
    auto rep = agreement::overlap_agreement(recs, force);
    if (force && rep.gate == agreement::Gate::Fail) {
      ctx.decide(lp.to_string() + ": failed the agreement gate, included by override");
    }
    arr.push_back(to_json(rep));
    reports.push_back(std::move(rep));
  }
  if (reports.empty()) ctx.decide("no items scored by two evaluators");
  write_file(ctx, out_json, dump(arr));
  if (overlap_ids_out) {
    std::set<std::string> ids;
    for (const auto& r : overlap) ids.insert(r.record_id);
    std::string body;
    for (const auto& id : ids) body += id + "\n";
    write_file(ctx, *overlap_ids_out, body);
  }
  return reports;
}

void cmd_normalize(RunContext& ctx, const fs::path& in, const fs::path& out,
                   const fs::path& bounds_out, std::size_t extremes) {
  const auto res = normalize::normalize_scores(read_records(ctx, in), extremes);
  if (res.bounds.shrunk) {
    spdlog::warn("only {} z-scores; averaging {} extremes per side instead of {}",
                 res.records.size(), res.bounds.m, extremes);
    ctx.decide(fmt::format("extremes shrunk from {} to {}", extremes, res.bounds.m));
  }
  ordered_json b;
  b["z_min"] = res.bounds.z_min;
  b["z_max"] = res.bounds.z_max;
  b["m"] = res.bounds.m;
  b["requested_m"] = extremes;
  b["shrunk"] = res.bounds.shrunk;
  write_records(ctx, out, res.records);
  write_file(ctx, bounds_out, dump(b));
}

void cmd_qa_flags(RunContext& ctx, const fs::path& in, const fs::path& out,
                  const fs::path& summary, bool drop_low_score_no_spans) {
  const auto records = read_records(ctx, in);
  std::vector<AnnotationRecord> kept;
  std::map<std::string, std::size_t> counts;
  ordered_json flags = ordered_json::array();
  for (const auto& r : records) {
    bool drop = false;
    for (const auto& f : qa::heuristic_flags(r)) {
      ++counts[std::string(qa::to_string(f.rule))];
      flags.push_back({{"record_id", f.record_id},
                       {"rule", std::string(qa::to_string(f.rule))},
                       {"detail", f.detail}});
      drop = drop || (drop_low_score_no_spans && f.rule == qa::Rule::LowScoreNoSpans);
    }
    if (!drop) kept.push_back(r);
  }
  if (drop_low_score_no_spans) {
    ctx.decide(fmt::format("dropped {} LowScoreNoSpans records",
                           records.size() - kept.size()));
  }
  ordered_json s;
  s["records"] = records.size();
  s["retained"] = kept.size();
  s["counts"] = counts;
  s["flags"] = flags;
  write_records(ctx, out, kept);
  write_file(ctx, summary, dump(s));
}

void cmd_qa_crossfilter(RunContext& ctx, const fs::path& in, const fs::path& out,
                        const fs::path& summary, double q) {
  const auto records = read_records(ctx, in);
  const auto res = qa::cross_filter_per_lp(records, q);
  ordered_json removed = ordered_json::array();
  for (const auto& d : res.decisions) {
    if (!d.removed) continue;
    removed.push_back({{"record_id", d.record_id},
                       {"da_score", d.da_score},
                       {"chrf", d.chrf},
                       {"reason", d.reason}});
  }
  ctx.decide(fmt::format("cross filter q={} per language pair, nearest-rank quantiles", q));
  ordered_json s;
  s["records"] = records.size();
  s["retained"] = res.retained.size();
  s["removed"] = removed;
  write_records(ctx, out, res.retained);
  write_file(ctx, summary, dump(s));
}

void cmd_qa_silver(RunContext& ctx, const fs::path& in, const fs::path& silver,
                   const fs::path& summary) {
  const auto records = read_records(ctx, in);
  const auto silver_scores = load_score_file(ctx, silver);
  std::map<std::string, qa::ScoreMap> per_eval;
  for (const auto& r : records) per_eval[r.evaluator_id][r.record_id] = r.da_score;
  const auto res = qa::silver_reliability(silver_scores, per_eval);
  ordered_json s;
  s["selected"] = res.selected;
  ordered_json ev = ordered_json::object();
  for (const auto& [id, rel] : res.per_evaluator) {
    ev[id] = {{"spearman", rel.spearman}, {"pearson", rel.pearson}, {"overlap", rel.overlap}};
  }
  s["evaluators"] = ev;
  write_file(ctx, summary, dump(s));
}

void cmd_qa_greedy(RunContext& ctx, const fs::path& in, const std::vector<fs::path>& silver,
                   double threshold, const fs::path& out, const fs::path& audit) {
  const auto records = read_records(ctx, in);
  std::vector<qa::ScoreMap> sets;
  for (const auto& p : silver) sets.push_back(load_score_file(ctx, p));
  const auto res = qa::greedy_filter_run(records, sets, threshold);

  std::string log = "iteration\tremoved_id\tobjective";
  for (std::size_t k = 0; k < sets.size(); ++k) log += "\tset" + std::to_string(k + 1);
  log += "\n0\t\t" + num(res.initial_objective);
  for (double v : res.initial_per_set) log += "\t" + num(v);
  log += "\n";
  for (const auto& st : res.audit) {
    log += std::to_string(st.iteration) + "\t" + st.removed_id + "\t" + num(st.objective);
    for (double v : st.per_set) log += "\t" + num(v);
    log += "\n";
  }
  write_file(ctx, audit, log);
  ctx.decide(fmt::format("greedy threshold {} on the mean Spearman over {} silver sets",
                         threshold, sets.size()));
  if (!res.reached) {
    throw Unreachable(fmt::format("objective stayed at or below {} down to {} records",
                                  threshold, res.retained.size()));
  }
  write_records(ctx, out, res.retained);
}

void cmd_split(RunContext& ctx, const SplitCommand& c) {
  const auto records = read_records(ctx, c.in);
  std::set<std::string> overlap;
  if (c.overlap) {
    for (const auto& line : read_lines(ctx, *c.overlap)) {
      if (!line.empty()) overlap.insert(line);
    }
  }
  split::SplitOptions opt;
  opt.n_test_docs = c.test_docs;
  opt.n_dev_docs = c.dev_docs;
  opt.seed = ctx.seed;
  opt.train_only_lps = c.train_only_lps;
  const auto assignment = split::document_split(records, overlap, opt);
  std::ostringstream os;
  split::write_assignment(os, assignment);
  write_file(ctx, c.out, os.str());
  ctx.decide(fmt::format("{} test docs, {} dev docs, {} overlap ids excluded", c.test_docs,
                         c.dev_docs, overlap.size()));
  for (const auto& lp : c.train_only_lps) ctx.decide(lp + " is train-only");

  if (c.records_dir) {
    std::map<corpus::SplitLabel, std::vector<AnnotationRecord>> parts;
    for (const auto& r : records) parts[assignment.at(r.record_id)].push_back(r);
    for (auto label : {corpus::SplitLabel::Train, corpus::SplitLabel::Dev,
                       corpus::SplitLabel::Test}) {
      const auto name = text::to_lower_ascii(corpus::to_string(label));
      write_records(ctx, *c.records_dir / (name + ".jsonl"), parts[label]);
    }
  }
}

// ---------------------------------------------------------------------------

void cmd_pseudo_embed(RunContext& ctx, const fs::path& in, std::size_t dim,
                      const fs::path& out) {
  const auto table = estimator::pseudo_embed_records(read_records(ctx, in), dim, ctx.seed);
  std::ostringstream os;
  estimator::save_embeddings(os, table);
  write_file(ctx, out, os.str());
  ctx.decide(fmt::format("pseudo embeddings, dim {}", dim));
}

namespace {

estimator::EmbeddingTable read_embeddings(RunContext& ctx, const fs::path& p) {
  auto t = estimator::load_embeddings(p);
  ctx.read(p);
  return t;
}

}  // namespace

estimator::TrainResult cmd_train(RunContext& ctx, const fs::path& data, const fs::path& emb,
                                 const estimator::TrainConfig& cfg,
                                 const fs::path& out_params,
                                 const std::optional<fs::path>& loss_log) {
  const auto records = read_records(ctx, data);
  const auto table = read_embeddings(ctx, emb);
  auto res = estimator::train(records, table, cfg);
  ordered_json pj = estimator::params_to_json(res.params);
  pj["train_config"] = cfg.to_json();
  write_file(ctx, out_params, pj.dump() + "\n");
  if (loss_log) {
    std::string body = "epoch\tloss\n";
    for (std::size_t e = 0; e < res.epoch_loss.size(); ++e) {
      body += std::to_string(e + 1) + "\t" + num(res.epoch_loss[e]) + "\n";
    }
    write_file(ctx, *loss_log, body);
  }
  ctx.decide(fmt::format("{} training on {} records, {} updates",
                         estimator::to_string(cfg.mode), records.size(), res.updates));
  return res;
}

void cmd_score(RunContext& ctx, estimator::Mode mode, const fs::path& params_path,
               const fs::path& data, const fs::path& emb, const fs::path& out) {
  std::ifstream in(params_path);
  if (!in) throw IoError("cannot open '" + params_path.string() + "'");
  json pj;
  try {
    pj = json::parse(in);
  } catch (const json::exception& e) {
    throw ShapeMismatch(std::string("parameter file is not JSON: ") + e.what());
  }
  ctx.read(params_path);
  const auto params = estimator::params_from_json(pj);
  const auto records = read_records(ctx, data);
  const auto table = read_embeddings(ctx, emb);
  const auto scores = estimator::score_records(params, mode, records, table);
  ctx.decide(fmt::format("{} predictions clipped to [0,1]", estimator::to_string(mode)));
  write_file(ctx, out, scores_tsv(scores));
}

// ---------------------------------------------------------------------------

namespace {

std::string raw_file_name(const std::string& id) {
  std::string safe;
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.';
    safe += ok ? c : '_';
  }
  return safe + "-" + sha256_hex(id).substr(0, 8) + ".txt";
}

std::string tsv_field(std::string s) {
  std::replace(s.begin(), s.end(), '\t', ' ');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

void cmd_judge(RunContext& ctx, judge::Provider& provider, const judge::JudgeConfig& cfg,
               const fs::path& train, const fs::path& test, const fs::path& out,
               const fs::path& raw_dir, const std::optional<fs::path>& run_out) {
  const auto train_records = read_records(ctx, train);
  const auto test_records = read_records(ctx, test);
  std::map<std::string, std::vector<AnnotationRecord>> train_by_lp;
  for (const auto& r : train_records) train_by_lp[r.lp.to_string()].push_back(r);

  std::vector<judge::JudgedRecord> judged;
  for (const auto& [lp, recs] : corpus::group_by_lp(test_records)) {
    std::vector<judge::Demonstration> demos;
    if (cfg.shots > 0) {
      auto it = train_by_lp.find(lp.to_string());
      if (it == train_by_lp.end()) {
        throw InsufficientTrainingData("no training records for " + lp.to_string());
      }
      demos = judge::select_demonstrations(it->second, cfg.seed);
      std::string picked;
      for (const auto& d : demos) {
        picked += (picked.empty() ? "" : ",") + d.record.record_id +
                  (d.fallback ? "(fallback)" : "");
      }
      ctx.decide(lp.to_string() + " demonstrations: " + picked);
    }
    auto run = judge::judge_dataset(provider, cfg, demos, recs);
    if (run.errors > 0) {
      ctx.decide(fmt::format("{}: {} provider errors scored 0.5", lp.to_string(), run.errors));
    }
    for (auto& j : run.records) judged.push_back(std::move(j));
  }
  std::sort(judged.begin(), judged.end(),
            [](const auto& a, const auto& b) { return a.record_id < b.record_id; });

  std::string body = "record_id\tscore\tflags\traw\n";
  std::map<std::string, double> scores;
  for (const auto& j : judged) {
    const fs::path raw_path = raw_dir / raw_file_name(j.record_id);
    write_file(ctx, raw_path, j.raw);
    std::string flags;
    for (const auto& f : j.flags) flags += (flags.empty() ? "" : ",") + f;
    body += j.record_id + "\t" + num(j.score) + "\t" + flags + "\t" +
            tsv_field(ctx.display(raw_path)) + "\n";
    scores[j.record_id] = j.score;
  }
  write_file(ctx, out, body);
  if (run_out) write_file(ctx, *run_out, scores_tsv(scores));
  ctx.decide(fmt::format("judge mode {}, spans {}, {} shots", judge::to_string(cfg.mode),
                         cfg.spans, cfg.shots));
}

// ---------------------------------------------------------------------------

void cmd_bench(RunContext& ctx, const fs::path& human, const fs::path& runs_dir,
               const fs::path& out_dir) {
  const auto test = normalize::standardize_test(read_records(ctx, human));
  std::map<std::string, std::string> lp_of;
  std::map<std::string, bench::ScoreMap> human_z;
  for (const auto& r : test) {
    lp_of[r.record_id] = r.lp.to_string();
    human_z[r.lp.to_string()][r.record_id] = *r.z_score;
  }

  std::vector<fs::path> files;
  if (!fs::is_directory(runs_dir)) {
    throw IoError("runs directory '" + runs_dir.string() + "' does not exist");
  }
  for (const auto& e : fs::directory_iterator(runs_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".tsv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<bench::MetricRun> runs;
  for (const auto& f : files) {
    const auto run = bench::read_run_tsv(f);
    ctx.read(f);
    for (auto& part : bench::split_run_by_lp(run, lp_of)) runs.push_back(std::move(part));
  }
  ctx.decide("human side: test scores z-standardized per language pair and evaluator");

  const auto report = bench::benchmark_report(runs, human_z);
  write_file(ctx, out_dir / "report_spearman.tsv", report.to_tsv(bench::Stat::Spearman));
  write_file(ctx, out_dir / "report_pearson.tsv", report.to_tsv(bench::Stat::Pearson));
  write_file(ctx, out_dir / "report.txt", report.to_text());
  write_file(ctx, out_dir / "error_correlation.tsv",
             bench::error_correlation_tsv(bench::error_score_correlation(test)));
  write_file(ctx, out_dir / "system_quality.tsv",
             bench::system_quality_tsv(bench::system_quality_summary(test)));
}

}  // namespace mteforge::app
