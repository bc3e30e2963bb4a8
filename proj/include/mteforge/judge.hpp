#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mteforge/bench.hpp"
#include "mteforge/corpus.hpp"

namespace mteforge::judge {

enum class JudgeMode { MTE, QE };
std::string_view to_string(JudgeMode m);

// Prompt wording. Every field may be overridden from the judge config.
struct PromptTemplates {
  std::string preamble_mte;
  std::string preamble_qe;
  std::string span_instructions;
  std::string direct_instructions;
  std::string demo_header;
  std::string candidate_header;

  static PromptTemplates defaults();
};

struct JudgeConfig {
  std::string endpoint;
  std::string model;
  JudgeMode mode = JudgeMode::MTE;
  bool spans = true;
  int shots = 5;
  int max_retries = 3;
  double timeout_s = 60.0;
  std::size_t max_concurrency = 4;
  std::uint64_t seed = 0;
  std::string api_key_env = "MTEFORGE_API_KEY";
  // First retry waits this long, doubling afterwards.
  double backoff_s = 1.0;
  PromptTemplates templates = PromptTemplates::defaults();

  // Throws ConfigError.
  void validate() const;
  static JudgeConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

inline constexpr int kIntervals = 5;

struct Demonstration {
  corpus::AnnotationRecord record;
  int interval_index = 0;
  // Interval was empty; the record nearest its midpoint stands in.
  bool fallback = false;

  bool operator==(const Demonstration&) const = default;
};

// One seeded pick per equal-width interval of [lo, hi]; by default the range
// is the min and max of the training scaled_scores. Empty intervals take the
// unused record nearest the midpoint. Throws InsufficientTrainingData.
std::vector<Demonstration> select_demonstrations(
    const std::vector<corpus::AnnotationRecord>& train, std::uint64_t seed,
    std::optional<std::pair<double, double>> range = std::nullopt);

// Text with each span wrapped in <s>...</s>; offsets in scalar values.
std::string mark_spans(const std::string& text,
                       const std::vector<corpus::ErrorSpan>& spans);

// Preamble plus the demonstration block; identical for every candidate of a
// run. Empty demonstration list or shots == 0 renders no demonstrations.
std::string render_prefix(const JudgeConfig& cfg,
                          const std::vector<Demonstration>& demos);
// The candidate section with the unanswered score request.
std::string render_candidate(const JudgeConfig& cfg,
                             const corpus::AnnotationRecord& candidate);
// render_prefix + render_candidate. Throws MissingReference in MTE mode.
std::string render_prompt(const JudgeConfig& cfg,
                          const std::vector<Demonstration>& demos,
                          const corpus::AnnotationRecord& candidate);

struct ParsedScore {
  double value = 0.5;
  bool fallback = false;
};

// Number after the last "score of translation is:", else the last standalone
// number; values in (1,100] are divided by 100; clamped to [0,1].
// Unparseable text gives 0.5 with fallback set.
ParsedScore parse_score(std::string_view raw);

struct ProviderResponse {
  int status = 200;
  bool timed_out = false;
  std::string text;   // completion text on success
  std::string error;  // diagnostic otherwise
};

// A chat-completion backend. Implementations must be callable from several
// threads at once.
class Provider {
 public:
  virtual ~Provider() = default;
  virtual ProviderResponse complete(const std::string& prompt) = 0;
};

// OpenAI-style POST {model, messages:[{role:user, content}]} returning
// choices[0].message.content. The bearer token is read from the environment
// variable named in the config.
class HttpChatProvider : public Provider {
 public:
  explicit HttpChatProvider(const JudgeConfig& cfg);
  ProviderResponse complete(const std::string& prompt) override;

 private:
  std::string base_;  // scheme://host[:port]
  std::string path_;
  std::string model_;
  std::string api_key_;
  double timeout_s_;
};

using Sleeper = std::function<void(std::chrono::duration<double>)>;

// Retries timeouts, 429 and 5xx with exponential backoff. Other statuses
// fail immediately. Throws ProviderError once retries are exhausted.
// `attempts` receives the number of requests made.
std::string submit(Provider& provider, const JudgeConfig& cfg,
                   const std::string& prompt, const Sleeper& sleep = {},
                   int* attempts = nullptr);

inline constexpr const char* kFlagFallback = "Fallback";
inline constexpr const char* kFlagProviderError = "ProviderError";

struct JudgedRecord {
  std::string record_id;
  double score = 0.5;
  std::set<std::string> flags;
  std::string raw;  // response text, or the provider error
  int attempts = 0;
};

struct JudgeRun {
  bench::MetricRun run;
  std::vector<JudgedRecord> records;  // ordered by record_id
  std::size_t errors = 0;
};

// Judges every record with at most cfg.max_concurrency requests in flight.
// Per-record provider failures score 0.5 and are flagged; the run throws
// JudgeRunFailed when more than half the records error.
JudgeRun judge_dataset(Provider& provider, const JudgeConfig& cfg,
                       const std::vector<Demonstration>& demos,
                       const std::vector<corpus::AnnotationRecord>& records,
                       const Sleeper& sleep = {});

}  // namespace mteforge::judge
