#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <mutex>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "mteforge/agreement.hpp"
#include "mteforge/judge.hpp"
#include "synth.hpp"

using namespace mteforge;
using namespace mteforge::judge;
using corpus::AnnotationRecord;
using corpus::ErrorCategory;
using corpus::Side;

namespace {

AnnotationRecord scored(const std::string& id, double scaled) {
  auto r = synth::rec(id, scaled * 100, "src " + id, "mt " + id, "ref " + id);
  r.scaled_score = scaled;
  return r;
}

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

// Text after "Source (xx): " on the last source line of a prompt.
std::string candidate_source(const std::string& prompt) {
  const auto at = prompt.rfind("Source (");
  const auto colon = prompt.find("): ", at);
  const auto eol = prompt.find('\n', colon);
  return prompt.substr(colon + 3, eol - colon - 3);
}

// Answers with the label stored for the candidate's source text; fails for
// sources in `failing`; measures peak concurrency.
class MockProvider : public Provider {
 public:
  std::map<std::string, double> labels;
  std::set<std::string> failing;
  std::chrono::milliseconds delay{0};
  std::atomic<int> in_flight{0};
  std::atomic<int> peak{0};
  std::atomic<int> calls{0};
  std::mutex mu;
  std::set<std::string> prefixes;

  ProviderResponse complete(const std::string& prompt) override {
    const int now = ++in_flight;
    int prev = peak.load();
    while (now > prev && !peak.compare_exchange_weak(prev, now)) {
    }
    ++calls;
    if (delay.count()) std::this_thread::sleep_for(delay);
    const auto src = candidate_source(prompt);
    {
      std::lock_guard lock(mu);
      prefixes.insert(prompt.substr(0, prompt.find("Now rate the following translation.")));
    }
    ProviderResponse r;
    if (failing.count(src)) {
      r.status = 503;
      r.error = "unavailable";
    } else {
      r.text = "1 error found. Based on the 1 error detected, the score of translation is: " +
               std::to_string(labels.at(src));
    }
    --in_flight;
    return r;
  }
};

class ScriptedProvider : public Provider {
 public:
  std::vector<ProviderResponse> script;
  std::size_t calls = 0;
  ProviderResponse complete(const std::string&) override { return script.at(calls++); }
};

const Sleeper kNoSleep = [](std::chrono::duration<double>) {};

}  // namespace

TEST(Demonstrations, OnePerInterval) {
  std::vector<AnnotationRecord> train;
  const double scores[] = {0.05, 0.15, 0.25, 0.55, 0.75, 0.95};
  for (int i = 0; i < 6; ++i) train.push_back(scored("t" + std::to_string(i), scores[i]));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto demos = select_demonstrations(train, seed, std::make_pair(0.0, 1.0));
    ASSERT_EQ(demos.size(), 5u);
    for (int k = 0; k < 5; ++k) {
      EXPECT_EQ(demos[k].interval_index, k);
      EXPECT_FALSE(demos[k].fallback);
      const double s = *demos[k].record.scaled_score;
      EXPECT_GE(s, 0.2 * k);
      if (k < 4) {
        EXPECT_LT(s, 0.2 * (k + 1));
      }
    }
    EXPECT_TRUE(demos[0].record.record_id == "t0" || demos[0].record.record_id == "t1");
    EXPECT_EQ(demos, select_demonstrations(train, seed, std::make_pair(0.0, 1.0)));
  }
}

TEST(Demonstrations, BothFirstBucketRecordsGetPicked) {
  std::vector<AnnotationRecord> train;
  const double scores[] = {0.05, 0.15, 0.25, 0.55, 0.75, 0.95};
  for (int i = 0; i < 6; ++i) train.push_back(scored("t" + std::to_string(i), scores[i]));
  std::set<std::string> first;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    first.insert(select_demonstrations(train, seed, std::make_pair(0.0, 1.0))[0].record.record_id);
  }
  EXPECT_EQ(first, (std::set<std::string>{"t0", "t1"}));
}

TEST(Demonstrations, DefaultRangeIsDataMinMaxAndLastIntervalClosed) {
  std::vector<AnnotationRecord> train;
  for (int i = 0; i <= 10; ++i) train.push_back(scored("t" + std::to_string(i), 0.1 + 0.06 * i));
  const auto demos = select_demonstrations(train, 3);
  const double lo = 0.1, w = 0.6 / 5;
  for (const auto& d : demos) {
    const double s = *d.record.scaled_score;
    EXPECT_FALSE(d.fallback);
    EXPECT_GE(s, lo + d.interval_index * w - 1e-12);
    if (d.interval_index < 4) {
      EXPECT_LT(s, lo + (d.interval_index + 1) * w);
    }
  }
  // The maximum can only be drawn into the last interval.
  bool max_seen = false;
  for (std::uint64_t seed = 0; seed < 30 && !max_seen; ++seed) {
    for (const auto& d : select_demonstrations(train, seed)) {
      if (d.record.record_id == "t10") {
        EXPECT_EQ(d.interval_index, 4);
        max_seen = true;
      }
    }
  }
  EXPECT_TRUE(max_seen);
}

TEST(Demonstrations, EmptyIntervalsFallBackToNearestMidpoint) {
  std::vector<AnnotationRecord> train;
  for (int i = 0; i < 8; ++i) train.push_back(scored("t" + std::to_string(i), 0.01 * i));
  const auto demos = select_demonstrations(train, 1, std::make_pair(0.0, 1.0));
  int fallbacks = 0;
  std::set<std::string> ids;
  for (const auto& d : demos) {
    fallbacks += d.fallback;
    ids.insert(d.record.record_id);
  }
  EXPECT_EQ(fallbacks, 4);
  EXPECT_EQ(ids.size(), 5u);
  // Interval 1 midpoint 0.3: nearest unused is the largest remaining score.
  EXPECT_TRUE(demos[1].fallback);
  EXPECT_EQ(demos[1].record.record_id, demos[0].record.record_id == "t7" ? "t6" : "t7");
}

TEST(Demonstrations, Errors) {
  std::vector<AnnotationRecord> train;
  for (int i = 0; i < 4; ++i) train.push_back(scored("t" + std::to_string(i), 0.1 * i));
  EXPECT_THROW(select_demonstrations(train, 0), InsufficientTrainingData);
  train.push_back(scored("t4", 0.3));
  for (auto& r : train) r.scaled_score = 0.5;
  EXPECT_THROW(select_demonstrations(train, 0), InsufficientTrainingData);
  train[0].scaled_score.reset();
  EXPECT_THROW(select_demonstrations(train, 0), MissingLabel);
}

TEST(Prompt, MarkSpans) {
  std::vector<corpus::ErrorSpan> spans = {{ErrorCategory::Omission, Side::Target, 4, 6},
                                          {ErrorCategory::Addition, Side::Target, 0, 3}};
  EXPECT_EQ(mark_spans("ẹkọ ni", spans), "<s>ẹkọ</s> <s>ni</s>");
  EXPECT_EQ(mark_spans("abcd", {{ErrorCategory::Omission, Side::Target, 0, 2},
                                {ErrorCategory::Omission, Side::Target, 2, 4}}),
            "<s>ab</s><s>cd</s>");
}

TEST(Prompt, SpanDemoHasMarkersAndErrorCount) {
  JudgeConfig cfg;
  auto demo_rec = scored("d0", 0.42);
  demo_rec.mt_output = "one two three";
  demo_rec.spans = {{ErrorCategory::Mistranslation, Side::Target, 0, 3},
                    {ErrorCategory::Omission, Side::Target, 8, 13}};
  std::vector<Demonstration> demos(5, Demonstration{scored("x", 0.9), 0, false});
  demos[2] = Demonstration{demo_rec, 2, false};
  const auto prefix = render_prefix(cfg, demos);
  const auto block = prefix.substr(prefix.find("Example 3"), prefix.find("Example 4") - prefix.find("Example 3"));
  const auto mt_line = block.substr(block.find("Translation"), block.find('\n', block.find("Translation")) - block.find("Translation"));
  const auto src_line = block.substr(block.find("Source"), block.find('\n', block.find("Source")) - block.find("Source"));
  EXPECT_EQ(count(mt_line, "<s>"), 2u);
  EXPECT_EQ(count(mt_line, "</s>"), 2u);
  EXPECT_EQ(count(src_line, "<s>"), 0u);
  EXPECT_EQ(count(block, "2 errors detected"), 1u);
  EXPECT_NE(block.find("The following 2 errors are detected:"), std::string::npos);
  EXPECT_NE(block.find("1. Mistranslation in the translation: \"one\""), std::string::npos);
  EXPECT_NE(block.find("the score of translation is: 0.42"), std::string::npos);
  EXPECT_NE(prefix.find("No error is detected."), std::string::npos);
}

TEST(Prompt, DirectModeHasNoSpanMarkup) {
  JudgeConfig cfg;
  cfg.spans = false;
  auto demo_rec = scored("d0", 0.42);
  demo_rec.spans = {{ErrorCategory::Mistranslation, Side::Target, 0, 2}};
  const auto prompt = render_prompt(cfg, std::vector<Demonstration>(5, {demo_rec, 0, false}), scored("c", 0.5));
  EXPECT_EQ(count(prompt, "<s>"), 0u);
  EXPECT_EQ(count(prompt, "The score of translation is: 0.42"), 5u);
  EXPECT_EQ(prompt.find("detected"), std::string::npos);
}

TEST(Prompt, QeNeverShowsReferences) {
  JudgeConfig cfg;
  cfg.mode = JudgeMode::QE;
  std::vector<Demonstration> demos;
  for (int i = 0; i < 5; ++i) demos.push_back({scored("d" + std::to_string(i), 0.2 * i), i, false});
  auto cand = scored("c", 0.5);
  const auto prompt = render_prompt(cfg, demos, cand);
  EXPECT_EQ(prompt.find("ref "), std::string::npos);
  EXPECT_EQ(prompt.find("Reference"), std::string::npos);
  cand.reference.reset();
  EXPECT_NO_THROW(render_prompt(cfg, demos, cand));
  cfg.mode = JudgeMode::MTE;
  EXPECT_THROW(render_prompt(cfg, demos, cand), MissingReference);
  EXPECT_NE(render_prompt(cfg, demos, scored("c", 0.5)).find("ref c"), std::string::npos);
}

TEST(Prompt, ZeroShotOmitsDemonstrations) {
  JudgeConfig cfg;
  cfg.shots = 0;
  std::vector<Demonstration> demos(5, {scored("demo", 0.3), 0, false});
  const auto prompt = render_prompt(cfg, demos, scored("c", 0.5));
  EXPECT_EQ(prompt.find("Example"), std::string::npos);
  EXPECT_EQ(prompt.find("src demo"), std::string::npos);
  EXPECT_NE(prompt.find("src c"), std::string::npos);
}

TEST(ParseScore, Cases) {
  EXPECT_DOUBLE_EQ(parse_score("Based on the 1 error detected, the score of translation is: 0.67").value, 0.67);
  const auto bad = parse_score("I cannot evaluate this.");
  EXPECT_DOUBLE_EQ(bad.value, 0.5);
  EXPECT_TRUE(bad.fallback);
  EXPECT_DOUBLE_EQ(parse_score("...score of translation is: 85").value, 0.85);
  EXPECT_DOUBLE_EQ(parse_score("The Score Of Translation Is: 0.3 (was 0.9)").value, 0.3);
  EXPECT_DOUBLE_EQ(parse_score("score of translation is: 0.2 ... score of translation is: 0.4").value, 0.4);
  EXPECT_DOUBLE_EQ(parse_score("I'd say 0.7, maybe 0.8").value, 0.8);
  EXPECT_DOUBLE_EQ(parse_score("score of translation is: 250").value, 1.0);
  EXPECT_DOUBLE_EQ(parse_score("score of translation is: -3").value, 0.0);
  EXPECT_DOUBLE_EQ(parse_score("gpt4o says 1").value, 1.0);
  EXPECT_TRUE(parse_score("model x2 v3").fallback);
  EXPECT_DOUBLE_EQ(parse_score("score of translation is: 1").value, 1.0);
}

TEST(ParseScore, TotalOverRandomStrings) {
  Rng rng(5);
  const std::string alphabet = "0123456789.-: abcxyzscore of translation is";
  for (int i = 0; i < 2000; ++i) {
    std::string s;
    const auto n = rng.index(40);
    for (std::size_t k = 0; k < n; ++k) s += alphabet[rng.index(alphabet.size())];
    const auto p = parse_score(s);
    EXPECT_GE(p.value, 0.0) << s;
    EXPECT_LE(p.value, 1.0) << s;
  }
}

TEST(Submit, RetriesTransientFailures) {
  ScriptedProvider p;
  ProviderResponse timeout;
  timeout.timed_out = true;
  timeout.status = 0;
  p.script = {{503, false, "", "busy"}, timeout, {200, false, "fine", ""}};
  JudgeConfig cfg;
  std::vector<double> waits;
  int attempts = 0;
  const auto text = submit(p, cfg, "prompt", [&](auto d) { waits.push_back(d.count()); }, &attempts);
  EXPECT_EQ(text, "fine");
  EXPECT_EQ(attempts, 3);
  EXPECT_EQ(waits, (std::vector<double>{1.0, 2.0}));
}

TEST(Submit, VerbatimEcho) {
  ScriptedProvider p;
  p.script = {{200, false, "  exact text\n", ""}};
  EXPECT_EQ(submit(p, JudgeConfig{}, "x", kNoSleep), "  exact text\n");
}

TEST(Submit, GivesUpAfterMaxRetries) {
  ScriptedProvider p;
  p.script = std::vector<ProviderResponse>(10, {429, false, "", "slow down"});
  JudgeConfig cfg;
  cfg.max_retries = 2;
  int attempts = 0;
  EXPECT_THROW(submit(p, cfg, "x", kNoSleep, &attempts), ProviderError);
  EXPECT_EQ(attempts, 3);
}

TEST(Submit, NonTransientFailsImmediately) {
  ScriptedProvider p;
  p.script = {{401, false, "", "unauthorized"}, {200, false, "never", ""}};
  int attempts = 0;
  EXPECT_THROW(submit(p, JudgeConfig{}, "x", kNoSleep, &attempts), ProviderError);
  EXPECT_EQ(attempts, 1);
}

namespace {

std::vector<AnnotationRecord> judged_records(int n, MockProvider& mock) {
  Rng rng(77);
  std::vector<AnnotationRecord> recs;
  for (int i = 0; i < n; ++i) {
    auto r = scored("rec" + std::to_string(1000 + i), std::round(rng.uniform01() * 100) / 100);
    mock.labels[r.source] = *r.scaled_score;
    recs.push_back(r);
  }
  return recs;
}

std::vector<Demonstration> some_demos() {
  std::vector<AnnotationRecord> train;
  for (int i = 0; i < 10; ++i) train.push_back(scored("train" + std::to_string(i), 0.1 * i));
  return select_demonstrations(train, 4);
}

}  // namespace

TEST(JudgeDataset, EchoMockReproducesLabels) {
  MockProvider mock;
  auto recs = judged_records(60, mock);
  JudgeConfig cfg;
  cfg.model = "mock-model";
  const auto run = judge_dataset(mock, cfg, some_demos(), recs, kNoSleep);
  EXPECT_EQ(run.errors, 0u);
  EXPECT_EQ(run.run.metric_name, "mock-model");
  EXPECT_EQ(run.run.lp, "eng-yor");
  std::vector<double> got, want;
  for (const auto& r : recs) {
    EXPECT_NEAR(run.run.scores.at(r.record_id), *r.scaled_score, 1e-6);
    got.push_back(run.run.scores.at(r.record_id));
    want.push_back(*r.scaled_score);
  }
  EXPECT_DOUBLE_EQ(agreement::spearman(got, want), 1.0);
  EXPECT_EQ(mock.prefixes.size(), 1u);
  for (std::size_t i = 1; i < run.records.size(); ++i) {
    EXPECT_LT(run.records[i - 1].record_id, run.records[i].record_id);
  }
}

TEST(JudgeDataset, ThreeOfHundredFail) {
  MockProvider mock;
  auto recs = judged_records(100, mock);
  const std::set<std::string> bad_ids = {"rec1007", "rec1042", "rec1099"};
  for (const auto& r : recs) {
    if (bad_ids.count(r.record_id)) mock.failing.insert(r.source);
  }
  JudgeConfig cfg;
  cfg.max_concurrency = 8;
  const auto run = judge_dataset(mock, cfg, some_demos(), recs, kNoSleep);
  EXPECT_EQ(run.errors, 3u);
  for (const auto& jr : run.records) {
    const bool bad = bad_ids.count(jr.record_id) > 0;
    EXPECT_EQ(jr.flags.count(kFlagProviderError) > 0, bad) << jr.record_id;
    if (bad) {
      EXPECT_DOUBLE_EQ(jr.score, 0.5);
      EXPECT_EQ(jr.attempts, cfg.max_retries + 1);
    }
  }
  EXPECT_EQ(run.run.flags.size(), 3u);
}

TEST(JudgeDataset, BoundedConcurrency) {
  MockProvider mock;
  mock.delay = std::chrono::milliseconds(3);
  auto recs = judged_records(100, mock);
  JudgeConfig cfg;
  cfg.max_concurrency = 8;
  judge_dataset(mock, cfg, some_demos(), recs, kNoSleep);
  EXPECT_LE(mock.peak.load(), 8);
  EXPECT_GE(mock.peak.load(), 2);
  EXPECT_EQ(mock.calls.load(), 100);
}

TEST(JudgeDataset, MajorityFailureAbortsRun) {
  MockProvider mock;
  auto recs = judged_records(10, mock);
  for (int i = 0; i < 6; ++i) mock.failing.insert(recs[i].source);
  JudgeConfig cfg;
  cfg.max_retries = 0;
  EXPECT_THROW(judge_dataset(mock, cfg, some_demos(), recs, kNoSleep), JudgeRunFailed);
  mock.failing.erase(recs[0].source);
  EXPECT_NO_THROW(judge_dataset(mock, cfg, some_demos(), recs, kNoSleep));
}

TEST(JudgeDataset, EmptyInputSendsNothing) {
  MockProvider mock;
  const auto run = judge_dataset(mock, JudgeConfig{}, some_demos(), {}, kNoSleep);
  EXPECT_TRUE(run.records.empty());
  EXPECT_EQ(mock.calls.load(), 0);
}

TEST(JudgeDataset, UnparseableResponsesFlagged) {
  ScriptedProvider p;
  p.script = {{200, false, "no idea", ""}};
  const auto run = judge_dataset(p, JudgeConfig{}, some_demos(), {scored("a", 0.3)}, kNoSleep);
  EXPECT_DOUBLE_EQ(run.records[0].score, 0.5);
  EXPECT_EQ(run.records[0].flags, (std::set<std::string>{kFlagFallback}));
}

TEST(JudgeConfigTest, ValidationAndJson) {
  auto j = JudgeConfig{}.to_json();
  EXPECT_FALSE(j.contains("api_key"));
  EXPECT_EQ(JudgeConfig::from_json(j).to_json(), j);
  EXPECT_THROW(JudgeConfig::from_json({{"shots", 3}}), ConfigError);
  EXPECT_THROW(JudgeConfig::from_json({{"max_concurrency", 0}}), ConfigError);
  EXPECT_THROW(JudgeConfig::from_json({{"mode", "both"}}), ConfigError);
  const auto c = JudgeConfig::from_json({{"mode", "QE"}, {"templates", {{"demo_header", "Sample"}}}});
  EXPECT_EQ(c.mode, JudgeMode::QE);
  EXPECT_EQ(c.templates.demo_header, "Sample");
  EXPECT_EQ(c.templates.candidate_header, PromptTemplates::defaults().candidate_header);
}

TEST(HttpProvider, TalksChatCompletionsWithBearerKey) {
  httplib::Server svr;
  std::atomic<int> hits{0};
  std::string seen_auth, seen_model, seen_content;
  svr.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    if (hits++ == 0) {
      res.status = 500;
      return;
    }
    seen_auth = req.get_header_value("Authorization");
    const auto body = nlohmann::json::parse(req.body);
    seen_model = body.at("model");
    seen_content = body.at("messages").at(0).at("content");
    nlohmann::json out = {{"choices", {{{"message", {{"role", "assistant"}, {"content", "score of translation is: 0.9"}}}}}}};
    res.set_content(out.dump(), "application/json");
  });
  svr.Post("/broken", [](const httplib::Request&, httplib::Response& res) { res.set_content("{}", "application/json"); });
  svr.Post("/slow", [](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(600));
    res.set_content("{}", "application/json");
  });
  const int port = svr.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread th([&] { svr.listen_after_bind(); });
  svr.wait_until_ready();

  ::setenv("MTEFORGE_TEST_KEY", "sekrit", 1);
  JudgeConfig cfg;
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port);
  cfg.model = "tiny";
  cfg.api_key_env = "MTEFORGE_TEST_KEY";
  HttpChatProvider provider(cfg);
  int attempts = 0;
  const auto text = submit(provider, cfg, "hello prompt", kNoSleep, &attempts);
  EXPECT_EQ(text, "score of translation is: 0.9");
  EXPECT_EQ(attempts, 2);
  EXPECT_EQ(seen_auth, "Bearer sekrit");
  EXPECT_EQ(seen_model, "tiny");
  EXPECT_EQ(seen_content, "hello prompt");

  cfg.endpoint += "/broken";
  HttpChatProvider broken(cfg);
  EXPECT_EQ(broken.complete("x").status, -1);

  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/slow";
  cfg.timeout_s = 0.2;
  HttpChatProvider slow(cfg);
  EXPECT_TRUE(slow.complete("x").timed_out);

  svr.stop();
  th.join();
  ::unsetenv("MTEFORGE_TEST_KEY");
  cfg.endpoint = "not a url";
  EXPECT_THROW(HttpChatProvider{cfg}, ConfigError);
}
