#include "mteforge/normalize.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace mteforge::normalize {

namespace {

// Fills z_score for the records selected by `key`, grouping on its value.
template <typename Key>
std::vector<corpus::AnnotationRecord> zscore_grouped(
    const std::vector<corpus::AnnotationRecord>& records, Key key) {
  using K = decltype(key(records.front()));
  std::map<K, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) {
    groups[key(records[i])].push_back(i);
  }
  auto out = records;
  for (const auto& [k, idx] : groups) {
    const auto& evaluator = records[idx.front()].evaluator_id;
    if (idx.size() < 2) {
      throw DegenerateEvaluator("evaluator '" + evaluator +
                                "' has fewer than 2 scores");
    }
    double mean = 0.0;
    for (auto i : idx) mean += records[i].da_score;
    mean /= static_cast<double>(idx.size());
    double ss = 0.0;
    for (auto i : idx) {
      const double d = records[i].da_score - mean;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(idx.size() - 1));
    if (sd == 0.0) {
      throw DegenerateEvaluator("evaluator '" + evaluator +
                                "' gave every item the same score");
    }
    for (auto i : idx) out[i].z_score = (records[i].da_score - mean) / sd;
  }
  return out;
}

}  // namespace

std::vector<corpus::AnnotationRecord> zscore_per_evaluator(
    const std::vector<corpus::AnnotationRecord>& records) {
  if (records.empty()) return {};
  return zscore_grouped(records, [](const corpus::AnnotationRecord& r) {
    return r.evaluator_id;
  });
}

ScaleBounds global_minmax_bounds(std::span<const double> z, std::size_t m) {
  if (z.empty()) throw EmptyInput("no z-scores to derive bounds from");
  if (m == 0) throw InvalidArgument("extreme count must be positive");
  ScaleBounds b;
  // Low and high extremes must not share values: at most half per side.
  const std::size_t per_side = std::max<std::size_t>(1, z.size() / 2);
  b.shrunk = m > per_side;
  b.m = std::min(m, per_side);
  std::vector<double> sorted(z.begin(), z.end());
  std::sort(sorted.begin(), sorted.end());
  double lo = 0.0, hi = 0.0;
  for (std::size_t i = 0; i < b.m; ++i) {
    lo += sorted[i];
    hi += sorted[sorted.size() - 1 - i];
  }
  b.z_min = lo / static_cast<double>(b.m);
  b.z_max = hi / static_cast<double>(b.m);
  if (!(b.z_min < b.z_max)) {
    throw DegenerateInput("extreme averages coincide (z_min == z_max)");
  }
  return b;
}

double scale_clip(double z, const ScaleBounds& bounds) {
  return std::clamp((z - bounds.z_min) / (bounds.z_max - bounds.z_min), 0.0,
                    1.0);
}

std::vector<corpus::AnnotationRecord> standardize_test(
    const std::vector<corpus::AnnotationRecord>& records) {
  if (records.empty()) throw EmptyInput("test set is empty");
  return zscore_grouped(records, [](const corpus::AnnotationRecord& r) {
    return std::make_pair(r.lp, r.evaluator_id);
  });
}

NormalizeResult normalize_scores(
    const std::vector<corpus::AnnotationRecord>& records, std::size_t m) {
  NormalizeResult res;
  res.records = zscore_per_evaluator(records);
  std::vector<double> z;
  z.reserve(res.records.size());
  for (const auto& r : res.records) z.push_back(*r.z_score);
  res.bounds = global_minmax_bounds(z, m);
  for (auto& r : res.records) r.scaled_score = scale_clip(*r.z_score, res.bounds);
  return res;
}

}  // namespace mteforge::normalize
