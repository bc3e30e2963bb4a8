#include "mteforge/qa.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "mteforge/agreement.hpp"
#include "mteforge/lexmetrics.hpp"

namespace mteforge::qa {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

std::vector<corpus::ErrorCategory> sorted_categories(
    const corpus::AnnotationRecord& r) {
  std::vector<corpus::ErrorCategory> cats;
  for (const auto& s : r.spans) cats.push_back(s.category);
  std::sort(cats.begin(), cats.end());
  return cats;
}

std::size_t nearest_rank_index(std::size_t n, double q) {
  if (n == 0) throw EmptyInput("quantile of an empty distribution");
  // ceil(q*n) with a guard against 0.2*n landing a hair above an integer.
  const auto rank = static_cast<std::size_t>(
      std::ceil(q * static_cast<double>(n) - 1e-9));
  return std::clamp<std::size_t>(rank, 1, n) - 1;
}

}  // namespace

std::string_view to_string(Rule rule) {
  switch (rule) {
    case Rule::LowScoreNoSpans:
      return "LowScoreNoSpans";
    case Rule::PerfectScoreWithSpans:
      return "PerfectScoreWithSpans";
    case Rule::ScoreDisagreement:
      return "ScoreDisagreement";
    case Rule::SelfInconsistent:
      return "SelfInconsistent";
  }
  return "?";
}

std::vector<QAFlag> heuristic_flags(const corpus::AnnotationRecord& record) {
  std::vector<QAFlag> flags;
  if (record.da_score < kLowScoreBar && record.spans.empty()) {
    flags.push_back({record.record_id, Rule::LowScoreNoSpans,
                     "score " + fmt(record.da_score) + " without error spans"});
  }
  if (record.da_score == kPerfectScore && !record.spans.empty()) {
    flags.push_back({record.record_id, Rule::PerfectScoreWithSpans,
                     "score 100 with " + std::to_string(record.spans.size()) +
                         " error span(s)"});
  }
  return flags;
}

std::string item_key(const corpus::AnnotationRecord& r) {
  return r.source + '\x1f' + r.mt_output;
}

EvaluatorTestReport evaluator_test_report(
    const std::vector<corpus::AnnotationRecord>& annotations,
    const PeerScores& peers) {
  EvaluatorTestReport rep;
  if (!annotations.empty()) rep.evaluator_id = annotations.front().evaluator_id;

  std::vector<std::string> order;
  std::map<std::string, std::vector<const corpus::AnnotationRecord*>> by_item;
  for (const auto& r : annotations) {
    const auto key = item_key(r);
    auto& slot = by_item[key];
    if (slot.empty()) order.push_back(key);
    slot.push_back(&r);
    for (auto& f : heuristic_flags(r)) rep.flags.push_back(std::move(f));
  }
  rep.heuristic_flag_count = rep.flags.size();

  std::size_t repeats = 0;
  rep.self_consistent = true;
  for (const auto& key : order) {
    const auto& anns = by_item[key];
    if (anns.size() < 2) continue;
    ++repeats;
    const auto& first = *anns[0];
    const auto& second = *anns[1];
    const double delta = std::abs(first.da_score - second.da_score);
    const bool scores_ok = delta < kSelfConsistencyBand;
    const bool spans_ok = sorted_categories(first) == sorted_categories(second);
    if (!scores_ok || !spans_ok) {
      rep.self_consistent = false;
      rep.flags.push_back(
          {second.record_id, Rule::SelfInconsistent,
           "repeat of " + first.record_id + ": score delta " + fmt(delta) +
               (spans_ok ? "" : ", span categories differ")});
    }
  }
  if (repeats < 2) {
    throw MissingRepeats("found " + std::to_string(repeats) +
                         " repeated item(s), need 2");
  }

  std::size_t agree = 0;
  for (const auto& key : order) {
    const auto& mine = *by_item[key].front();
    for (const auto& [peer, scores] : peers) {
      auto it = scores.find(key);
      if (it == scores.end()) continue;
      ++rep.shared_items;
      const double delta = std::abs(mine.da_score - it->second);
      if (delta < kPeerAgreementBand) {
        ++agree;
      } else {
        rep.flags.push_back({mine.record_id, Rule::ScoreDisagreement,
                             "differs from " + peer + " by " + fmt(delta)});
      }
    }
  }
  rep.pairwise_agreement_rate =
      rep.shared_items == 0
          ? 0.0
          : static_cast<double>(agree) / static_cast<double>(rep.shared_items);
  return rep;
}

double nearest_rank_low(std::vector<double> values, double q) {
  const auto idx = nearest_rank_index(values.size(), q);
  std::nth_element(values.begin(), values.begin() + idx, values.end());
  return values[idx];
}

double nearest_rank_high(std::vector<double> values, double q) {
  const auto idx = nearest_rank_index(values.size(), q);
  std::nth_element(values.begin(), values.begin() + idx, values.end(),
                   std::greater<>());
  return values[idx];
}

CrossFilterResult cross_filter_da_chrf(
    const std::vector<corpus::AnnotationRecord>& records, double q) {
  if (!(q > 0.0 && q < 0.5)) throw InvalidArgument("quantile must be in (0, 0.5)");
  CrossFilterResult res;
  if (records.empty()) return res;

  std::vector<double> da, chrf;
  for (const auto& r : records) {
    da.push_back(r.da_score);
    chrf.push_back(lex::chrf_sentence(r.mt_output, r.require_reference(),
                                      lex::ChrfConfig::chrf()));
  }
  const double da_hi = nearest_rank_high(da, q);
  const double da_lo = nearest_rank_low(da, q);
  const double chrf_hi = nearest_rank_high(chrf, q);
  const double chrf_lo = nearest_rank_low(chrf, q);

  for (std::size_t i = 0; i < records.size(); ++i) {
    CrossFilterDecision d{records[i].record_id, da[i], chrf[i], false, {}};
    if (da[i] >= da_hi && chrf[i] <= chrf_lo) {
      d.removed = true;
      d.reason = "high-da-low-chrf";
    } else if (da[i] <= da_lo && chrf[i] >= chrf_hi) {
      d.removed = true;
      d.reason = "low-da-high-chrf";
    }
    if (!d.removed) res.retained.push_back(records[i]);
    res.decisions.push_back(std::move(d));
  }
  return res;
}

CrossFilterResult cross_filter_per_lp(
    const std::vector<corpus::AnnotationRecord>& records, double q) {
  std::map<std::string, CrossFilterDecision> by_id;
  for (const auto& [lp, group] : corpus::group_by_lp(records)) {
    for (auto& d : cross_filter_da_chrf(group, q).decisions) {
      by_id[d.record_id] = std::move(d);
    }
  }
  CrossFilterResult res;
  for (const auto& r : records) {
    const auto& d = by_id.at(r.record_id);
    if (!d.removed) res.retained.push_back(r);
    res.decisions.push_back(d);
  }
  return res;
}

std::string select_reliable(const std::map<std::string, Reliability>& stats) {
  if (stats.empty()) throw EmptyInput("no evaluators to select from");
  auto best = stats.begin();
  for (auto it = std::next(stats.begin()); it != stats.end(); ++it) {
    const auto& a = it->second;
    const auto& b = best->second;
    // std::map iterates ids in order, so strict comparisons keep the
    // smaller id on a full tie.
    if (a.spearman > b.spearman ||
        (a.spearman == b.spearman && a.pearson > b.pearson)) {
      best = it;
    }
  }
  return best->first;
}

SilverReliabilityResult silver_reliability(
    const ScoreMap& silver, const std::map<std::string, ScoreMap>& per_evaluator) {
  SilverReliabilityResult res;
  for (const auto& [evaluator, scores] : per_evaluator) {
    std::vector<double> e, s;
    for (const auto& [id, v] : scores) {
      if (auto it = silver.find(id); it != silver.end()) {
        e.push_back(v);
        s.push_back(it->second);
      }
    }
    if (e.size() < agreement::kMinPoints) {
      throw InsufficientOverlap("evaluator '" + evaluator + "' shares " +
                                std::to_string(e.size()) +
                                " id(s) with the silver scores");
    }
    res.per_evaluator[evaluator] = {agreement::spearman(e, s),
                                    agreement::pearson(e, s), e.size()};
  }
  res.selected = select_reliable(res.per_evaluator);
  return res;
}

double greedy_objective(const std::vector<corpus::AnnotationRecord>& records,
                        const std::vector<ScoreMap>& silver_sets,
                        std::vector<double>* per_set) {
  std::vector<double> da;
  da.reserve(records.size());
  for (const auto& r : records) da.push_back(r.da_score);
  double sum = 0.0;
  if (per_set) per_set->clear();
  std::vector<double> silver(records.size());
  for (const auto& set : silver_sets) {
    for (std::size_t i = 0; i < records.size(); ++i) {
      auto it = set.find(records[i].record_id);
      if (it == set.end()) {
        throw InvalidArgument("silver set lacks record '" +
                              records[i].record_id + "'");
      }
      silver[i] = it->second;
    }
    const double rho = agreement::spearman(da, silver);
    if (per_set) per_set->push_back(rho);
    sum += rho;
  }
  return sum / static_cast<double>(silver_sets.size());
}

GreedyResult greedy_filter_run(
    const std::vector<corpus::AnnotationRecord>& records,
    const std::vector<ScoreMap>& silver_sets, double threshold) {
  if (silver_sets.size() < 2) {
    throw InvalidArgument("greedy filtering needs at least 2 silver sets");
  }
  GreedyResult res;
  res.retained = records;
  res.initial_objective =
      greedy_objective(res.retained, silver_sets, &res.initial_per_set);
  double objective = res.initial_objective;

  std::vector<corpus::AnnotationRecord> trial;
  while (objective <= threshold) {
    if (res.retained.size() <= kGreedyFloor) return res;
    std::optional<std::size_t> best;
    double best_objective = 0.0;
    std::vector<double> best_per_set;
    for (std::size_t i = 0; i < res.retained.size(); ++i) {
      trial.assign(res.retained.begin(), res.retained.end());
      trial.erase(trial.begin() + static_cast<std::ptrdiff_t>(i));
      std::vector<double> per_set;
      double value;
      try {
        value = greedy_objective(trial, silver_sets, &per_set);
      } catch (const DegenerateInput&) {
        continue;
      }
      const bool better =
          !best || value > best_objective ||
          (value == best_objective &&
           res.retained[i].record_id < res.retained[*best].record_id);
      if (better) {
        best = i;
        best_objective = value;
        best_per_set = std::move(per_set);
      }
    }
    if (!best) return res;
    GreedyStep step;
    step.iteration = res.audit.size() + 1;
    step.removed_id = res.retained[*best].record_id;
    step.objective = best_objective;
    step.per_set = std::move(best_per_set);
    res.retained.erase(res.retained.begin() + static_cast<std::ptrdiff_t>(*best));
    res.audit.push_back(std::move(step));
    objective = best_objective;
  }
  res.reached = true;
  return res;
}

GreedyResult greedy_filter(const std::vector<corpus::AnnotationRecord>& records,
                           const std::vector<ScoreMap>& silver_sets,
                           double threshold) {
  auto res = greedy_filter_run(records, silver_sets, threshold);
  if (!res.reached) {
    throw Unreachable("objective stayed at or below " + fmt(threshold) +
                      " down to " + std::to_string(res.retained.size()) +
                      " records");
  }
  return res;
}

}  // namespace mteforge::qa
