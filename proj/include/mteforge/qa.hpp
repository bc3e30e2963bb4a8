#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mteforge/corpus.hpp"

namespace mteforge::qa {

enum class Rule {
  LowScoreNoSpans,
  PerfectScoreWithSpans,
  ScoreDisagreement,
  SelfInconsistent
};
std::string_view to_string(Rule rule);

struct QAFlag {
  std::string record_id;
  Rule rule = Rule::LowScoreNoSpans;
  std::string detail;
};

inline constexpr double kLowScoreBar = 80.0;
inline constexpr double kPerfectScore = 100.0;

// LowScoreNoSpans: score below 80 with no spans. PerfectScoreWithSpans: a
// score of 100 with at least one span.
std::vector<QAFlag> heuristic_flags(const corpus::AnnotationRecord& record);

// Items are identified across annotators by their (source, MT) text pair.
std::string item_key(const corpus::AnnotationRecord& r);

inline constexpr double kPeerAgreementBand = 20.0;
inline constexpr double kSelfConsistencyBand = 5.0;
inline constexpr double kPeerAgreementRate = 0.8;

struct EvaluatorTestReport {
  std::string evaluator_id;
  std::size_t heuristic_flag_count = 0;
  double pairwise_agreement_rate = 0.0;
  std::size_t shared_items = 0;
  bool self_consistent = false;
  std::vector<QAFlag> flags;
};

// peer evaluator id -> item key -> score.
using PeerScores = std::map<std::string, std::map<std::string, double>>;

// Scores a candidate's evaluator test. Items annotated twice are the
// repeats; the first annotation of an item is compared against peers.
// Throws MissingRepeats when fewer than 2 repeated items exist.
EvaluatorTestReport evaluator_test_report(
    const std::vector<corpus::AnnotationRecord>& annotations,
    const PeerScores& peers);

inline constexpr double kDefaultQuantile = 0.20;

// Value at the ceil(q*n)-th position from the bottom (nearest rank).
double nearest_rank_low(std::vector<double> values, double q);
// Value at the ceil(q*n)-th position from the top.
double nearest_rank_high(std::vector<double> values, double q);

struct CrossFilterDecision {
  std::string record_id;
  double da_score = 0;
  double chrf = 0;
  bool removed = false;
  // "high-da-low-chrf" or "low-da-high-chrf" when removed.
  std::string reason;
};

struct CrossFilterResult {
  std::vector<corpus::AnnotationRecord> retained;
  std::vector<CrossFilterDecision> decisions;  // input order
};

// Removes records whose DA is in the top q while sentence ChrF is in the
// bottom q, and vice versa. Quantiles are computed over `records`, which
// should be a single language pair. Throws MissingReference.
CrossFilterResult cross_filter_da_chrf(
    const std::vector<corpus::AnnotationRecord>& records,
    double q = kDefaultQuantile);

// Applies cross_filter_da_chrf separately to each language pair, keeping the
// input order.
CrossFilterResult cross_filter_per_lp(
    const std::vector<corpus::AnnotationRecord>& records,
    double q = kDefaultQuantile);

using ScoreMap = std::map<std::string, double>;

struct Reliability {
  double spearman = 0;
  double pearson = 0;
  std::size_t overlap = 0;
};

struct SilverReliabilityResult {
  std::map<std::string, Reliability> per_evaluator;
  std::string selected;
};

// Higher Spearman wins, Pearson breaks ties, then the smaller evaluator id.
std::string select_reliable(const std::map<std::string, Reliability>& stats);

// Throws InsufficientOverlap when an evaluator shares < 3 ids with silver.
SilverReliabilityResult silver_reliability(
    const ScoreMap& silver, const std::map<std::string, ScoreMap>& per_evaluator);

inline constexpr double kGreedyThreshold = 0.5;
inline constexpr std::size_t kGreedyFloor = 3;

struct GreedyStep {
  std::size_t iteration = 0;
  std::string removed_id;
  double objective = 0;  // after the removal
  std::vector<double> per_set;
};

struct GreedyResult {
  std::vector<corpus::AnnotationRecord> retained;
  double initial_objective = 0;
  std::vector<double> initial_per_set;
  std::vector<GreedyStep> audit;
  bool reached = false;
};

// Mean over silver sets of Spearman(DA, silver) on `records`.
double greedy_objective(const std::vector<corpus::AnnotationRecord>& records,
                        const std::vector<ScoreMap>& silver_sets,
                        std::vector<double>* per_set = nullptr);

// Repeatedly drops the record whose removal maximizes the objective until
// it exceeds `threshold`. Ties go to the lexicographically smallest
// record_id. Throws Unreachable when the 3-record floor is hit first.
GreedyResult greedy_filter(const std::vector<corpus::AnnotationRecord>& records,
                           const std::vector<ScoreMap>& silver_sets,
                           double threshold = kGreedyThreshold);

// Same loop, but reports failure through GreedyResult::reached and keeps the
// audit trail of the attempt.
GreedyResult greedy_filter_run(
    const std::vector<corpus::AnnotationRecord>& records,
    const std::vector<ScoreMap>& silver_sets,
    double threshold = kGreedyThreshold);

}  // namespace mteforge::qa
