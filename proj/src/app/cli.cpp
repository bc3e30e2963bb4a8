#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "mteforge/app.hpp"
#include "mteforge/config.hpp"

namespace mteforge::app {

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string log_level = "info";
  std::string out_dir;

  // Relative output paths land under --out-dir when it is given.
  fs::path out(const std::string& p) const {
    const fs::path path(p);
    if (out_dir.empty() || path.is_absolute()) return path;
    return fs::path(out_dir) / path;
  }
  RunContext ctx() const {
    RunContext c;
    c.seed = seed;
    return c;
  }
};

nlohmann::json section(const nlohmann::json& cfg, const char* name) {
  return cfg.contains(name) ? cfg.at(name) : cfg;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"MT evaluation toolkit: QA, normalization, splits, estimator, judge, bench"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every randomized step");
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error, off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}));
  app.add_option("--out-dir", g.out_dir, "Directory for relative output paths");

  std::function<void()> action;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate annotations and write canonical JSONL");
  std::string in, out, format = "jsonl";
  bool lenient = false, dedup = false;
  ingest->add_option("--in", in)->required();
  ingest->add_option("--format", format)->check(CLI::IsMember({"jsonl", "tsv"}));
  ingest->add_option("--out", out)->required();
  ingest->add_flag("--lenient", lenient, "Skip malformed lines instead of aborting");
  ingest->add_flag("--dedup", dedup, "Drop repeated (source, MT) pairs");
  ingest->callback([&] {
    action = [&] {
      auto ctx = g.ctx();
      cmd_ingest(ctx, in, g.out(out), {*corpus::parse_format(format), lenient, dedup});
    };
  });

  // lexscore
  auto* lexscore = app.add_subcommand("lexscore", "Sentence ChrF, ChrF++ or BLEU per record");
  std::string metric, hyp, ref;
  lexscore->add_option("--metric", metric)
      ->required()
      ->check(CLI::IsMember({"chrf", "chrfpp", "bleu"}));
  lexscore->add_option("--in", in, "Annotation JSONL (mt_output against reference)");
  lexscore->add_option("--hyp", hyp, "Plain text, one hypothesis per line");
  lexscore->add_option("--ref", ref, "Plain text, one reference per line");
  lexscore->add_option("--out", out)->required();
  lexscore->callback([&] {
    action = [&] {
      auto ctx = g.ctx();
      const auto m = *parse_lex_metric(metric);
      if (!in.empty()) {
        cmd_lexscore(ctx, m, in, g.out(out));
      } else if (!hyp.empty() && !ref.empty()) {
        cmd_lexscore_text(ctx, m, hyp, ref, g.out(out));
      } else {
        throw InvalidArgument("give --in, or both --hyp and --ref");
      }
    };
  });

  // agree
  auto* agree = app.add_subcommand("agree", "Agreement statistics and gate per language pair");
  std::string overlap_out;
  std::vector<std::string> force_include;
  agree->add_option("--in", in)->required();
  agree->add_option("--out", out)->required();
  agree->add_option("--overlap-ids-out", overlap_out);
  agree->add_option("--force-include", force_include, "LPs kept despite a failed gate");
  agree->callback([&] {
    action = [&] {
      auto ctx = g.ctx();
      std::optional<fs::path> ids;
      if (!overlap_out.empty()) ids = g.out(overlap_out);
      cmd_agree(ctx, in, g.out(out), ids, {force_include.begin(), force_include.end()});
    };
  });

  // normalize
  auto* norm = app.add_subcommand("normalize", "Per-evaluator z-scores and scaled scores");
  std::string bounds_out;
  std::size_t extremes = 800;
  norm->add_option("--in", in)->required();
  norm->add_option("--out", out)->required();
  norm->add_option("--bounds-out", bounds_out)->required();
  norm->add_option("--extremes", extremes);
  norm->callback([&] {
    action = [&] {
      auto ctx = g.ctx();
      cmd_normalize(ctx, in, g.out(out), g.out(bounds_out), extremes);
    };
  });

  // qa
  auto* qa = app.add_subcommand("qa", "Annotation quality checks");
  qa->require_subcommand(1);
  std::string summary, silver_path, audit;
  std::vector<std::string> silver_paths;
  bool drop = false;
  double quantile = 0.2, threshold = 0.5;

  auto* flags = qa->add_subcommand("flags", "Heuristic score/span consistency flags");
  flags->add_option("--in", in)->required();
  flags->add_option("--out", out)->required();
  flags->add_option("--summary", summary)->required();
  flags->add_flag("--drop-low-score-no-spans", drop);
  flags->callback([&] {
    action = [&] {
      auto ctx = g.ctx();
      cmd_qa_flags(ctx, in, g.out(out), g.out(summary), drop);
    };
  });

  auto* cross = qa->add_subcommand("crossfilter", "DA/ChrF quadrant filter");
  cross->add_option("--in", in)->required();
  cross->add_option("--out", out)->required();
  cross->add_option("--summary", summary)->required();
  cross->add_option("--quantile", quantile);
  cross->callback([&] {
    action = [&] {
      auto ctx = g.ctx();
      cmd_qa_crossfilter(ctx, in, g.out(out), g.out(summary), quantile);
    };
  });

  auto* silver = qa->add_subcommand("silver", "Evaluator reliability against silver scores");
  silver->add_option("--in", in)->required();
  silver->add_option("--silver", silver_path)->required();
  silver->add_option("--summary", summary)->required();
  silver->callback([&] {
    action = [&] {
      auto ctx = g.ctx();
      cmd_qa_silver(ctx, in, silver_path, g.out(summary));
    };
  });

  auto* greedy = qa->add_subcommand("greedy", "Greedy removal until silver agreement passes");
  greedy->add_option("--in", in)->required();
  greedy->add_option("--silver", silver_paths, "Two or more silver score files")->required();
  greedy->add_option("--threshold", threshold);
  greedy->add_option("--out", out)->required();
  greedy->add_option("--audit", audit)->required();
  greedy->callback([&] {
    action = [&] {
      auto ctx = g.ctx();
      std::vector<fs::path> paths(silver_paths.begin(), silver_paths.end());
      cmd_qa_greedy(ctx, in, paths, threshold, g.out(out), g.out(audit));
    };
  });

  // split
  auto* split = app.add_subcommand("split", "Document-level train/dev/test assignment");
  SplitCommand sc;
  std::string overlap_path, records_dir;
  std::vector<std::string> train_only;
  split->add_option("--in", in)->required();
  split->add_option("--overlap", overlap_path, "File of overlap record ids");
  split->add_option("--test-docs", sc.test_docs);
  split->add_option("--dev-docs", sc.dev_docs);
  split->add_option("--train-only", train_only, "LPs whose records all go to Train");
  split->add_option("--out", out)->required();
  split->add_option("--records-dir", records_dir, "Also write train/dev/test JSONL here");
  split->callback([&] {
    action = [&] {
      auto ctx = g.ctx();
      sc.in = in;
      if (!overlap_path.empty()) sc.overlap = overlap_path;
      sc.train_only_lps = {train_only.begin(), train_only.end()};
      sc.out = g.out(out);
      if (!records_dir.empty()) sc.records_dir = g.out(records_dir);
      cmd_split(ctx, sc);
    };
  });

  // pseudo-embed
  auto* pe = app.add_subcommand("pseudo-embed", "Deterministic stand-in embeddings");
  std::size_t dim = 32;
  pe->add_option("--in", in)->required();
  pe->add_option("--dim", dim);
  pe->add_option("--out", out)->required();
  pe->callback([&] {
    action = [&] {
      auto ctx = g.ctx();
      cmd_pseudo_embed(ctx, in, dim, g.out(out));
    };
  });

  // train / score
  std::string mode_name, data, emb, config_path, params_path, loss_log;
  auto* train = app.add_subcommand("train", "Fit the adequacy regressor");
  train->add_option("--mode", mode_name)->check(CLI::IsMember({"stl", "mtl", "qe"}));
  train->add_option("--data", data)->required();
  train->add_option("--emb", emb)->required();
  train->add_option("--config", config_path, "TOML with training settings");
  train->add_option("--out", out)->required();
  train->add_option("--loss-log", loss_log);
  train->callback([&] {
    action = [&] {
      auto ctx = g.ctx();
      nlohmann::json j = nlohmann::json::object();
      if (!config_path.empty()) j = section(config::load_toml(config_path), "train");
      if (!mode_name.empty()) j["mode"] = mode_name;
      j["seed"] = g.seed;
      const auto cfg = estimator::TrainConfig::from_json(j);
      std::optional<fs::path> log;
      if (!loss_log.empty()) log = g.out(loss_log);
      cmd_train(ctx, data, emb, cfg, g.out(out), log);
    };
  });

  auto* score = app.add_subcommand("score", "Score records with trained parameters");
  score->add_option("--mode", mode_name)
      ->required()
      ->check(CLI::IsMember({"stl", "mtl", "qe"}));
  score->add_option("--params", params_path)->required();
  score->add_option("--data", data)->required();
  score->add_option("--emb", emb)->required();
  score->add_option("--out", out)->required();
  score->callback([&] {
    action = [&] {
      auto ctx = g.ctx();
      cmd_score(ctx, *estimator::parse_mode(mode_name), params_path, data, emb, g.out(out));
    };
  });

  // judge
  auto* jd = app.add_subcommand("judge", "Few-shot LLM adequacy judging");
  std::string train_path, test_path, raw_dir, run_out;
  jd->add_option("--config", config_path)->required();
  jd->add_option("--train", train_path)->required();
  jd->add_option("--test", test_path)->required();
  jd->add_option("--out", out)->required();
  jd->add_option("--raw-dir", raw_dir, "Raw responses (default: <out>.raw)");
  jd->add_option("--run-out", run_out, "Also write a record_id/score run file");
  jd->callback([&] {
    action = [&] {
      auto ctx = g.ctx();
      auto j = section(config::load_toml(config_path), "judge");
      j["seed"] = g.seed;
      const auto cfg = judge::JudgeConfig::from_json(j);
      judge::HttpChatProvider provider(cfg);
      const auto out_path = g.out(out);
      const fs::path raw = raw_dir.empty() ? fs::path(out_path.string() + ".raw")
                                           : g.out(raw_dir);
      std::optional<fs::path> ro;
      if (!run_out.empty()) ro = g.out(run_out);
      cmd_judge(ctx, provider, cfg, train_path, test_path, out_path, raw, ro);
    };
  });

  // bench
  auto* bench = app.add_subcommand("bench", "Correlation report against human z-scores");
  std::string human, runs;
  bench->add_option("--human", human)->required();
  bench->add_option("--runs", runs, "Directory of <metric>.tsv run files")->required();
  bench->add_option("--out", out)->required();
  bench->callback([&] {
    action = [&] {
      auto ctx = g.ctx();
      cmd_bench(ctx, human, runs, g.out(out));
    };
  });

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "Run the stages of a TOML config");
  pipe->add_option("--config", config_path)->required();
  bool seed_given = false;
  pipe->callback([&] {
    action = [&] {
      PipelineOptions opt;
      if (!g.out_dir.empty()) opt.out_dir = g.out_dir;
      if (seed_given) opt.seed = g.seed;
      run_pipeline(config_path, opt);
    };
  });

  try {
    app.parse(argc, argv);
    seed_given = app.count("--seed") > 0;
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  spdlog::set_level(spdlog::level::from_str(g.log_level));
  spdlog::set_pattern("%l: %v");

  try {
    action();
  } catch (const StageFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace mteforge::app
