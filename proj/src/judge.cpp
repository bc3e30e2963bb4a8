#include "mteforge/judge.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include <fmt/format.h>

#include "mteforge/random.hpp"
#include "mteforge/text.hpp"

namespace mteforge::judge {

using corpus::AnnotationRecord;

std::string_view to_string(JudgeMode m) { return m == JudgeMode::MTE ? "mte" : "qe"; }

PromptTemplates PromptTemplates::defaults() {
  PromptTemplates t;
  t.preamble_mte =
      "You are rating machine translation output for adequacy, meaning how much "
      "of the source sentence's meaning the translation carries over. A "
      "reference translation is given for comparison. Scores run from 0 (no "
      "meaning preserved) to 1 (all meaning preserved).";
  t.preamble_qe =
      "You are rating machine translation output for adequacy, meaning how much "
      "of the source sentence's meaning the translation carries over. No "
      "reference translation is available, so judge against the source only. "
      "Scores run from 0 (no meaning preserved) to 1 (all meaning preserved).";
  t.span_instructions =
      "Before giving a score, list the errors in the translation. Each error is "
      "an Addition, Omission, Mistranslation or Untranslated span, and marked "
      "text appears between span tags.";
  t.direct_instructions = "Give the score directly.";
  t.demo_header = "Example";
  t.candidate_header = "Now rate the following translation.";
  return t;
}

void JudgeConfig::validate() const {
  if (shots != 0 && shots != kIntervals) throw ConfigError("shots must be 0 or 5");
  if (max_concurrency < 1) throw ConfigError("max_concurrency must be >= 1");
  if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (!(timeout_s > 0)) throw ConfigError("timeout must be positive");
  if (!(backoff_s >= 0)) throw ConfigError("backoff must be >= 0");
}

JudgeConfig JudgeConfig::from_json(const nlohmann::json& j) {
  JudgeConfig c;
  try {
    c.endpoint = j.value("endpoint", c.endpoint);
    c.model = j.value("model", c.model);
    if (j.contains("mode")) {
      const auto m = text::to_lower_ascii(j.at("mode").get<std::string>());
      if (m == "mte") {
        c.mode = JudgeMode::MTE;
      } else if (m == "qe") {
        c.mode = JudgeMode::QE;
      } else {
        throw ConfigError("judge mode must be mte or qe");
      }
    }
    c.spans = j.value("spans", c.spans);
    c.shots = j.value("shots", c.shots);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.timeout_s = j.value("timeout_s", c.timeout_s);
    c.max_concurrency = j.value("max_concurrency", c.max_concurrency);
    c.seed = j.value("seed", c.seed);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.backoff_s = j.value("backoff_s", c.backoff_s);
    if (j.contains("templates")) {
      const auto& t = j.at("templates");
      c.templates.preamble_mte = t.value("preamble_mte", c.templates.preamble_mte);
      c.templates.preamble_qe = t.value("preamble_qe", c.templates.preamble_qe);
      c.templates.span_instructions =
          t.value("span_instructions", c.templates.span_instructions);
      c.templates.direct_instructions =
          t.value("direct_instructions", c.templates.direct_instructions);
      c.templates.demo_header = t.value("demo_header", c.templates.demo_header);
      c.templates.candidate_header =
          t.value("candidate_header", c.templates.candidate_header);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad judge config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json JudgeConfig::to_json() const {
  // The API key itself never appears here, only the variable name.
  return {{"endpoint", endpoint},
          {"model", model},
          {"mode", std::string(to_string(mode))},
          {"spans", spans},
          {"shots", shots},
          {"max_retries", max_retries},
          {"timeout_s", timeout_s},
          {"max_concurrency", max_concurrency},
          {"seed", seed},
          {"api_key_env", api_key_env},
          {"backoff_s", backoff_s}};
}

// ---------------------------------------------------------------------------

std::vector<Demonstration> select_demonstrations(
    const std::vector<AnnotationRecord>& train, std::uint64_t seed,
    std::optional<std::pair<double, double>> range) {
  std::vector<AnnotationRecord> pool;
  for (const auto& r : train) {
    if (!r.scaled_score) {
      throw MissingLabel("record '" + r.record_id + "' has no scaled_score");
    }
    pool.push_back(r);
  }
  if (pool.size() < static_cast<std::size_t>(kIntervals)) {
    throw InsufficientTrainingData("need at least 5 training records, found " +
                                   std::to_string(pool.size()));
  }
  std::sort(pool.begin(), pool.end(),
            [](const auto& a, const auto& b) { return a.record_id < b.record_id; });

  double lo, hi;
  if (range) {
    std::tie(lo, hi) = *range;
  } else {
    const auto [mn, mx] = std::minmax_element(
        pool.begin(), pool.end(),
        [](const auto& a, const auto& b) { return *a.scaled_score < *b.scaled_score; });
    lo = *mn->scaled_score;
    hi = *mx->scaled_score;
  }
  if (!(hi > lo)) {
    throw InsufficientTrainingData("training scores span a single value");
  }
  const double w = (hi - lo) / kIntervals;

  std::vector<std::vector<std::size_t>> buckets(kIntervals);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const double s = *pool[i].scaled_score;
    if (s < lo || s > hi) continue;
    int idx = std::clamp(static_cast<int>(std::floor((s - lo) / w)), 0, kIntervals - 1);
    // Settle boundary values exactly against lo + i*w.
    while (idx < kIntervals - 1 && s >= lo + (idx + 1) * w) ++idx;
    while (idx > 0 && s < lo + idx * w) --idx;
    buckets[static_cast<std::size_t>(idx)].push_back(i);
  }

  Rng rng(mix64(seed));
  std::vector<std::optional<Demonstration>> picked(kIntervals);
  std::vector<bool> used(pool.size(), false);
  for (int k = 0; k < kIntervals; ++k) {
    const auto& b = buckets[static_cast<std::size_t>(k)];
    if (b.empty()) continue;
    const auto i = b[rng.index(b.size())];
    used[i] = true;
    picked[static_cast<std::size_t>(k)] = Demonstration{pool[i], k, false};
  }
  for (int k = 0; k < kIntervals; ++k) {
    if (picked[static_cast<std::size_t>(k)]) continue;
    const double mid = lo + (k + 0.5) * w;
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (used[i]) continue;
      if (!best || std::abs(*pool[i].scaled_score - mid) <
                       std::abs(*pool[*best].scaled_score - mid)) {
        best = i;
      }
    }
    used[*best] = true;
    picked[static_cast<std::size_t>(k)] = Demonstration{pool[*best], k, true};
  }
  std::vector<Demonstration> out;
  for (auto& d : picked) out.push_back(std::move(*d));
  return out;
}

std::string mark_spans(const std::string& text_utf8,
                       const std::vector<corpus::ErrorSpan>& spans) {
  const auto chars = text::decode_utf8(text_utf8);
  // (position, 0 = close / 1 = open); closes sort first at equal positions.
  std::vector<std::pair<std::size_t, int>> events;
  for (const auto& s : spans) {
    events.emplace_back(std::min(s.start, chars.size()), 1);
    events.emplace_back(std::min(s.end, chars.size()), 0);
  }
  std::sort(events.begin(), events.end());
  std::string out;
  std::size_t pos = 0;
  for (const auto& [at, open] : events) {
    out += text::encode_utf8(std::u32string_view(chars).substr(pos, at - pos));
    out += open ? "<s>" : "</s>";
    pos = at;
  }
  out += text::encode_utf8(std::u32string_view(chars).substr(pos));
  return out;
}

namespace {

std::string score_text(double v) { return fmt::format("{:.2f}", v); }

std::string errors_phrase(std::size_t n) {
  return std::to_string(n) + (n == 1 ? " error" : " errors");
}

std::vector<corpus::ErrorSpan> spans_on(const AnnotationRecord& r, corpus::Side side) {
  std::vector<corpus::ErrorSpan> out;
  for (const auto& s : r.spans) {
    if (s.side == side) out.push_back(s);
  }
  return out;
}

void render_segments(std::string& out, const JudgeConfig& cfg,
                     const AnnotationRecord& r, bool with_spans) {
  const auto src_lang = r.lp.source_lang();
  const auto tgt_lang = r.lp.target_lang();
  const auto src = with_spans ? mark_spans(r.source, spans_on(r, corpus::Side::Source))
                              : r.source;
  const auto mt = with_spans
                      ? mark_spans(r.mt_output, spans_on(r, corpus::Side::Target))
                      : r.mt_output;
  out += "Source (" + src_lang + "): " + src + "\n";
  if (cfg.mode == JudgeMode::MTE) {
    out += "Reference (" + tgt_lang + "): " + r.require_reference() + "\n";
  }
  out += "Translation (" + tgt_lang + "): " + mt + "\n";
}

void render_demo(std::string& out, const JudgeConfig& cfg, const Demonstration& d,
                 std::size_t number) {
  const auto& r = d.record;
  out += cfg.templates.demo_header + " " + std::to_string(number) + "\n";
  render_segments(out, cfg, r, cfg.spans);
  const auto score = score_text(*r.scaled_score);
  if (!cfg.spans) {
    out += "The score of translation is: " + score + "\n";
    return;
  }
  const std::size_t n = r.spans.size();
  if (n == 0) {
    out += "No error is detected.\n";
  } else {
    out += n == 1 ? "The following error is detected:\n"
                  : "The following " + errors_phrase(n) + " are detected:\n";
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = r.spans[i];
      const auto& txt = r.text_on(s.side);
      out += std::to_string(i + 1) + ". " + std::string(corpus::to_string(s.category)) +
             " in the " +
             (s.side == corpus::Side::Source ? "source" : "translation") + ": \"" +
             text::substr_scalars(txt, s.start, s.end) + "\"\n";
    }
  }
  out += "Based on the " + errors_phrase(n) +
         " detected, the score of translation is: " + score + "\n";
}

}  // namespace

std::string render_prefix(const JudgeConfig& cfg,
                          const std::vector<Demonstration>& demos) {
  std::string out = cfg.mode == JudgeMode::MTE ? cfg.templates.preamble_mte
                                               : cfg.templates.preamble_qe;
  out += "\n";
  out += cfg.spans ? cfg.templates.span_instructions : cfg.templates.direct_instructions;
  out += "\n\n";
  if (cfg.shots == 0) return out;
  for (std::size_t i = 0; i < demos.size(); ++i) {
    if (!demos[i].record.scaled_score) {
      throw MissingLabel("demonstration '" + demos[i].record.record_id +
                         "' has no scaled_score");
    }
    render_demo(out, cfg, demos[i], i + 1);
    out += "\n";
  }
  return out;
}

std::string render_candidate(const JudgeConfig& cfg, const AnnotationRecord& candidate) {
  std::string out = cfg.templates.candidate_header + "\n";
  render_segments(out, cfg, candidate, false);
  if (cfg.spans) {
    out +=
        "List the errors you detect, then finish with \"Based on the N error(s) "
        "detected, the score of translation is: X\".\n";
  } else {
    out += "Finish with \"The score of translation is: X\".\n";
  }
  return out;
}

std::string render_prompt(const JudgeConfig& cfg, const std::vector<Demonstration>& demos,
                          const AnnotationRecord& candidate) {
  return render_prefix(cfg, demos) + render_candidate(cfg, candidate);
}

// ---------------------------------------------------------------------------

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_word(char c) {
  return is_digit(c) || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}

struct NumberHit {
  std::size_t pos;
  double value;
};

// Standalone decimal numbers: not glued to a word on either side.
std::vector<NumberHit> find_numbers(std::string_view s) {
  std::vector<NumberHit> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (!is_digit(s[i]) || (i > 0 && (is_word(s[i - 1]) || s[i - 1] == '.'))) {
      ++i;
      continue;
    }
    std::size_t start = i;
    if (start > 0 && s[start - 1] == '-' && (start < 2 || !is_word(s[start - 2]))) {
      --start;
    }
    std::size_t j = i;
    while (j < s.size() && is_digit(s[j])) ++j;
    if (j + 1 < s.size() && s[j] == '.' && is_digit(s[j + 1])) {
      ++j;
      while (j < s.size() && is_digit(s[j])) ++j;
    }
    if (j < s.size() && is_word(s[j])) {
      i = j;
      while (i < s.size() && is_word(s[i])) ++i;
      continue;
    }
    out.push_back({start, std::stod(std::string(s.substr(start, j - start)))});
    i = j;
  }
  return out;
}

}  // namespace

ParsedScore parse_score(std::string_view raw) {
  static constexpr std::string_view kAnchor = "score of translation is:";
  const std::string lower = text::to_lower_ascii(raw);
  const auto numbers = find_numbers(raw);
  std::optional<double> v;
  if (const auto at = lower.rfind(kAnchor); at != std::string::npos) {
    const auto after = at + kAnchor.size();
    for (const auto& h : numbers) {
      if (h.pos >= after) {
        v = h.value;
        break;
      }
    }
  }
  if (!v && !numbers.empty()) v = numbers.back().value;
  if (!v || !std::isfinite(*v)) return {0.5, true};
  double x = *v;
  if (x > 1.0 && x <= 100.0) x /= 100.0;
  return {std::clamp(x, 0.0, 1.0), false};
}

// ---------------------------------------------------------------------------

std::string submit(Provider& provider, const JudgeConfig& cfg, const std::string& prompt,
                   const Sleeper& sleep, int* attempts) {
  std::string last_error;
  for (int attempt = 0;; ++attempt) {
    if (attempts) *attempts = attempt + 1;
    ProviderResponse resp;
    try {
      resp = provider.complete(prompt);
    } catch (const std::exception& e) {
      resp.status = 0;
      resp.error = e.what();
    }
    if (!resp.timed_out && resp.status == 200) return resp.text;
    const bool transient = resp.timed_out || resp.status == 0 || resp.status == 429 ||
                           (resp.status >= 500 && resp.status < 600);
    last_error = resp.timed_out ? "request timed out"
                                : "status " + std::to_string(resp.status);
    if (!resp.error.empty()) last_error += ": " + resp.error;
    if (!transient || attempt >= cfg.max_retries) {
      throw ProviderError(last_error + " after " + std::to_string(attempt + 1) +
                          " attempt(s)");
    }
    const std::chrono::duration<double> wait(cfg.backoff_s * std::ldexp(1.0, attempt));
    if (sleep) {
      sleep(wait);
    } else {
      std::this_thread::sleep_for(wait);
    }
  }
}

JudgeRun judge_dataset(Provider& provider, const JudgeConfig& cfg,
                       const std::vector<Demonstration>& demos,
                       const std::vector<AnnotationRecord>& records, const Sleeper& sleep) {
  cfg.validate();
  std::vector<const AnnotationRecord*> order;
  for (const auto& r : records) order.push_back(&r);
  std::sort(order.begin(), order.end(),
            [](const auto* a, const auto* b) { return a->record_id < b->record_id; });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (order[i]->record_id == order[i - 1]->record_id) {
      throw DuplicateId("record id '" + order[i]->record_id + "' appears twice");
    }
  }

  // Render everything up front so bad input fails before any request.
  const std::string prefix = render_prefix(cfg, demos);
  std::vector<std::string> prompts;
  for (const auto* r : order) prompts.push_back(prefix + render_candidate(cfg, *r));

  JudgeRun out;
  out.records.resize(order.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < order.size(); i = next++) {
      auto& rec = out.records[i];
      rec.record_id = order[i]->record_id;
      try {
        rec.raw = submit(provider, cfg, prompts[i], sleep, &rec.attempts);
        const auto parsed = parse_score(rec.raw);
        rec.score = parsed.value;
        if (parsed.fallback) rec.flags.insert(kFlagFallback);
      } catch (const ProviderError& e) {
        rec.raw = e.what();
        rec.score = 0.5;
        rec.flags.insert(kFlagProviderError);
      }
    }
  };
  const std::size_t n_workers = std::min(cfg.max_concurrency, order.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  if (n_workers > 0) worker();
  for (auto& t : pool) t.join();

  std::set<std::string> lps;
  for (const auto& rec : out.records) {
    if (rec.flags.count(kFlagProviderError)) ++out.errors;
  }
  for (const auto* r : order) lps.insert(r->lp.to_string());
  if (out.errors * 2 > out.records.size()) {
    throw JudgeRunFailed(std::to_string(out.errors) + " of " +
                         std::to_string(out.records.size()) + " requests failed");
  }

  out.run.metric_name = cfg.model.empty() ? "llm-judge" : cfg.model;
  out.run.lp = lps.size() == 1 ? *lps.begin() : "";
  for (const auto& rec : out.records) {
    out.run.scores[rec.record_id] = rec.score;
    if (!rec.flags.empty()) out.run.flags[rec.record_id] = rec.flags;
  }
  out.run.metadata = {{"mode", std::string(to_string(cfg.mode))},
                      {"spans", cfg.spans ? "true" : "false"},
                      {"shots", std::to_string(cfg.shots)},
                      {"seed", std::to_string(cfg.seed)},
                      {"model", cfg.model}};
  return out;
}

}  // namespace mteforge::judge
