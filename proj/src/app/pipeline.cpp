#include <cctype>
#include <fstream>
#include <memory>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "mteforge/app.hpp"
#include "mteforge/config.hpp"

namespace mteforge::app {

using nlohmann::json;

namespace {

const std::set<std::string> kStages = {"ingest", "agree",   "qa",    "normalize",
                                       "split",  "lexscore", "train", "score",
                                       "judge",  "bench"};

std::string stage_label(const std::string& stage) {
  std::string s = stage;
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s + "Stage";
}

// Artifacts handed from one stage to the next within a run.
struct State {
  fs::path config_dir;
  fs::path out;
  std::uint64_t seed = 0;
  std::optional<fs::path> records;
  std::optional<fs::path> overlap_ids;
  std::optional<fs::path> train, dev, test;
  std::optional<fs::path> embeddings;
  std::optional<fs::path> params;
  std::optional<estimator::Mode> mode;
  judge::Provider* provider = nullptr;

  fs::path runs() const { return out / "runs"; }
  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : config_dir / path;
  }
};

fs::path input_or(const State& st, const json& params, const char* key,
                  const std::optional<fs::path>& fallback, const std::string& what) {
  if (params.contains(key)) return st.resolve(params.at(key).get<std::string>());
  if (fallback) return *fallback;
  throw ConfigError("no " + what + ": set '" + key +
                    "' or run an earlier stage that produces it");
}

std::set<std::string> string_set(const json& params, const char* key) {
  std::set<std::string> out;
  if (params.contains(key)) {
    for (const auto& v : params.at(key)) out.insert(v.get<std::string>());
  }
  return out;
}

void stage_ingest(State& st, RunContext& ctx, const json& p) {
  IngestOptions opt;
  const auto fmt_name = p.value("format", std::string("jsonl"));
  const auto fmt = corpus::parse_format(fmt_name);
  if (!fmt) throw ConfigError("unknown format '" + fmt_name + "'");
  opt.format = *fmt;
  opt.lenient = p.value("lenient", false);
  opt.dedup = p.value("dedup", false);
  const auto in = input_or(st, p, "input", std::nullopt, "input file");
  const auto out = st.out / "ingest" / "records.jsonl";
  cmd_ingest(ctx, in, out, opt);
  st.records = out;
}

void stage_agree(State& st, RunContext& ctx, const json& p) {
  const auto in = input_or(st, p, "input", st.records, "records");
  const auto ids = st.out / "agree" / "overlap_ids.txt";
  cmd_agree(ctx, in, st.out / "agree" / "agreement.json", ids,
            string_set(p, "force_include"));
  st.overlap_ids = ids;
}

void stage_qa(State& st, RunContext& ctx, const json& p) {
  auto current = input_or(st, p, "input", st.records, "records");
  const auto dir = st.out / "qa";
  const bool drop = p.value("drop_low_score_no_spans", true);
  cmd_qa_flags(ctx, current, dir / "flagged.jsonl", dir / "flags.json", drop);
  current = dir / "flagged.jsonl";
  if (p.value("cross_filter", true)) {
    cmd_qa_crossfilter(ctx, current, dir / "crossfiltered.jsonl", dir / "crossfilter.json",
                       p.value("quantile", 0.20));
    current = dir / "crossfiltered.jsonl";
  }
  if (p.contains("greedy_silver")) {
    std::vector<fs::path> silver;
    for (const auto& s : p.at("greedy_silver")) silver.push_back(st.resolve(s.get<std::string>()));
    cmd_qa_greedy(ctx, current, silver, p.value("greedy_threshold", 0.5),
                  dir / "greedy.jsonl", dir / "greedy_audit.tsv");
    current = dir / "greedy.jsonl";
  }
  st.records = current;
}

void stage_normalize(State& st, RunContext& ctx, const json& p) {
  const auto in = input_or(st, p, "input", st.records, "records");
  const auto out = st.out / "normalize" / "records.jsonl";
  cmd_normalize(ctx, in, out, st.out / "normalize" / "bounds.json",
                p.value("extremes", std::size_t{800}));
  st.records = out;
}

void stage_split(State& st, RunContext& ctx, const json& p) {
  SplitCommand c;
  c.in = input_or(st, p, "input", st.records, "records");
  if (p.contains("overlap")) {
    c.overlap = st.resolve(p.at("overlap").get<std::string>());
  } else {
    c.overlap = st.overlap_ids;
  }
  c.test_docs = p.value("test_docs", c.test_docs);
  c.dev_docs = p.value("dev_docs", c.dev_docs);
  c.train_only_lps = string_set(p, "train_only_lps");
  c.out = st.out / "split" / "assignment.tsv";
  c.records_dir = st.out / "split";
  cmd_split(ctx, c);
  st.train = st.out / "split" / "train.jsonl";
  st.dev = st.out / "split" / "dev.jsonl";
  st.test = st.out / "split" / "test.jsonl";
}

void stage_lexscore(State& st, RunContext& ctx, const json& p) {
  const auto in = input_or(st, p, "input", st.test, "test records");
  std::vector<std::string> metrics = {"chrf", "chrfpp", "bleu"};
  if (p.contains("metrics")) metrics = p.at("metrics").get<std::vector<std::string>>();
  for (const auto& m : metrics) {
    const auto metric = parse_lex_metric(m);
    if (!metric) throw ConfigError("unknown lexical metric '" + m + "'");
    cmd_lexscore(ctx, *metric, in, st.runs() / (std::string(to_string(*metric)) + ".tsv"));
  }
}

estimator::Mode mode_of(const json& p, estimator::Mode fallback) {
  if (!p.contains("mode")) return fallback;
  const auto m = estimator::parse_mode(p.at("mode").get<std::string>());
  if (!m) throw ConfigError("mode must be stl, mtl or qe");
  return *m;
}

void stage_train(State& st, RunContext& ctx, const json& p) {
  const auto data = input_or(st, p, "input", st.train, "training records");
  json cfg_json = p;
  cfg_json["seed"] = ctx.seed;
  auto cfg = estimator::TrainConfig::from_json(cfg_json);
  if (p.contains("embeddings")) {
    st.embeddings = st.resolve(p.at("embeddings").get<std::string>());
  } else {
    // Pseudo embeddings for every record the later stages may score.
    const auto all = input_or(st, p, "embed_input", st.records, "records to embed");
    st.embeddings = st.out / "train" / "embeddings.emb";
    cmd_pseudo_embed(ctx, all, p.value("pseudo_dim", std::size_t{32}), *st.embeddings);
  }
  st.params = st.out / "train" / "params.json";
  cmd_train(ctx, data, *st.embeddings, cfg, *st.params, st.out / "train" / "loss.tsv");
  st.mode = cfg.mode;
}

void stage_score(State& st, RunContext& ctx, const json& p) {
  const auto mode = mode_of(p, st.mode.value_or(estimator::Mode::STL));
  const auto params = input_or(st, p, "params", st.params, "regressor parameters");
  const auto emb = input_or(st, p, "embeddings", st.embeddings, "embeddings");
  const auto data = input_or(st, p, "input", st.test, "test records");
  const auto name =
      p.value("name", "estimator-" + std::string(estimator::to_string(mode)));
  cmd_score(ctx, mode, params, data, emb, st.runs() / (name + ".tsv"));
}

void stage_judge(State& st, RunContext& ctx, const json& p) {
  json cfg_json = p;
  cfg_json["seed"] = ctx.seed;
  const auto cfg = judge::JudgeConfig::from_json(cfg_json);
  const auto train = input_or(st, p, "train", st.train, "training records");
  const auto test = input_or(st, p, "test", st.test, "test records");
  std::unique_ptr<judge::Provider> owned;
  judge::Provider* provider = st.provider;
  if (!provider) {
    owned = std::make_unique<judge::HttpChatProvider>(cfg);
    provider = owned.get();
  }
  const auto name = p.value("name", std::string("llm-judge"));
  cmd_judge(ctx, *provider, cfg, train, test, st.out / "judge" / "judge.tsv",
            st.out / "judge" / "raw", st.runs() / (name + ".tsv"));
}

void stage_bench(State& st, RunContext& ctx, const json& p) {
  const auto human = input_or(st, p, "human", st.test, "human test records");
  const auto runs = p.contains("runs") ? st.resolve(p.at("runs").get<std::string>())
                                       : st.runs();
  cmd_bench(ctx, human, runs, st.out / "bench");
}

void run_stage(State& st, RunContext& ctx, const std::string& stage, const json& p) {
  if (stage == "ingest") return stage_ingest(st, ctx, p);
  if (stage == "agree") return stage_agree(st, ctx, p);
  if (stage == "qa") return stage_qa(st, ctx, p);
  if (stage == "normalize") return stage_normalize(st, ctx, p);
  if (stage == "split") return stage_split(st, ctx, p);
  if (stage == "lexscore") return stage_lexscore(st, ctx, p);
  if (stage == "train") return stage_train(st, ctx, p);
  if (stage == "score") return stage_score(st, ctx, p);
  if (stage == "judge") return stage_judge(st, ctx, p);
  if (stage == "bench") return stage_bench(st, ctx, p);
}

}  // namespace

void run_pipeline(const fs::path& config_path, const PipelineOptions& options) {
  const json cfg = config::load_toml(config_path);
  State st;
  st.config_dir = fs::absolute(config_path).parent_path();
  st.provider = options.provider;

  std::vector<std::string> stages;
  try {
    stages = cfg.at("stages").get<std::vector<std::string>>();
    st.seed = options.seed.value_or(cfg.value("seed", std::uint64_t{0}));
    st.out = options.out_dir ? fs::absolute(*options.out_dir)
                             : st.resolve(cfg.value("out_dir", std::string("out")));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("pipeline config needs a 'stages' list: ") + e.what());
  }
  for (const auto& s : stages) {
    if (!kStages.count(s)) throw ConfigError("unknown stage '" + s + "'");
  }

  for (const auto& stage : stages) {
    const json params = cfg.contains(stage) ? cfg.at(stage) : json::object();
    RunContext ctx;
    ctx.base = st.out;
    ctx.source_base = st.config_dir;
    spdlog::info("running {}", stage_label(stage));
    try {
      if (!params.is_object()) throw ConfigError("[" + stage + "] must be a table");
      ctx.seed = params.value("seed", st.seed);
      run_stage(st, ctx, stage, params);
      const auto dir = st.out / stage;
      fs::create_directories(dir);
      std::ofstream out(dir / "manifest.json", std::ios::binary);
      out << ctx.manifest(stage, params).dump(2) << "\n";
      if (!out) throw IoError("cannot write '" + (dir / "manifest.json").string() + "'");
    } catch (const std::exception& e) {
      throw StageFailure(stage_label(stage), e.what());
    }
  }
}

}  // namespace mteforge::app
