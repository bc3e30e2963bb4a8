#include "mteforge/agreement.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>

#include "mteforge/normalize.hpp"

namespace mteforge::agreement {

namespace {

void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw LengthMismatch("vectors of length " + std::to_string(x.size()) +
                         " and " + std::to_string(y.size()));
  }
  if (x.size() < kMinPoints) {
    throw DegenerateInput("correlation needs at least " +
                          std::to_string(kMinPoints) + " points, got " +
                          std::to_string(x.size()));
  }
}

double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) /
         static_cast<double>(v.size());
}

// Number of inversions of `v`, sorting it in place.
std::int64_t count_inversions(std::vector<double>& v) {
  std::vector<double> buf(v.size());
  std::int64_t swaps = 0;
  for (std::size_t width = 1; width < v.size(); width *= 2) {
    for (std::size_t lo = 0; lo < v.size(); lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, v.size());
      const std::size_t hi = std::min(lo + 2 * width, v.size());
      std::size_t i = lo, j = mid, k = lo;
      while (i < mid && j < hi) {
        if (v[j] < v[i]) {
          swaps += static_cast<std::int64_t>(mid - i);
          buf[k++] = v[j++];
        } else {
          buf[k++] = v[i++];
        }
      }
      while (i < mid) buf[k++] = v[i++];
      while (j < hi) buf[k++] = v[j++];
    }
    v.swap(buf);
  }
  return swaps;
}

// Sum over tie groups of t(t-1)/2 for an already sorted range.
template <typename It, typename Eq>
std::int64_t tied_pairs(It first, It last, Eq eq) {
  std::int64_t total = 0;
  while (first != last) {
    auto run_end = std::find_if_not(first, last,
                                    [&](const auto& v) { return eq(*first, v); });
    const auto t = static_cast<std::int64_t>(run_end - first);
    total += t * (t - 1) / 2;
    first = run_end;
  }
  return total;
}

}  // namespace

double pearson(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw DegenerateInput("constant vector has no correlation");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && x[order[j]] == x[order[i]]) ++j;
    // Positions i..j-1 (0-based) share the mean 1-based rank.
    const double rank = 0.5 * static_cast<double>(i + j + 1);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

double kendall_tau_b(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const auto n = static_cast<std::int64_t>(x.size());
  std::vector<std::pair<double, double>> pairs(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) pairs[i] = {x[i], y[i]};
  std::sort(pairs.begin(), pairs.end());

  const std::int64_t n0 = n * (n - 1) / 2;
  const std::int64_t ties_x = tied_pairs(
      pairs.begin(), pairs.end(),
      [](const auto& a, const auto& b) { return a.first == b.first; });
  const std::int64_t ties_xy =
      tied_pairs(pairs.begin(), pairs.end(),
                 [](const auto& a, const auto& b) { return a == b; });

  std::vector<double> ys(x.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) ys[i] = pairs[i].second;
  const std::int64_t swaps = count_inversions(ys);
  const std::int64_t ties_y = tied_pairs(
      ys.begin(), ys.end(), [](double a, double b) { return a == b; });

  const double denom = std::sqrt(static_cast<double>(n0 - ties_x)) *
                       std::sqrt(static_cast<double>(n0 - ties_y));
  if (denom == 0.0) {
    throw DegenerateInput("Kendall tau-b undefined: a vector is constant");
  }
  const std::int64_t concordant_minus_discordant =
      n0 - ties_x - ties_y + ties_xy - 2 * swaps;
  return std::clamp(static_cast<double>(concordant_minus_discordant) / denom,
                    -1.0, 1.0);
}

RatingMatrix::RatingMatrix(std::size_t rows, std::size_t cols,
                           std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeMismatch("rating matrix data does not match " +
                        std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

RatingMatrix RatingMatrix::from_columns(std::span<const double> a,
                                        std::span<const double> b) {
  if (a.size() != b.size()) throw LengthMismatch("rater columns differ in length");
  RatingMatrix m(a.size(), 2);
  for (std::size_t i = 0; i < a.size(); ++i) {
    m.at(i, 0) = a[i];
    m.at(i, 1) = b[i];
  }
  return m;
}

AnovaTable two_way_anova(const RatingMatrix& ratings) {
  const std::size_t n = ratings.rows();
  const std::size_t k = ratings.cols();
  if (n < kMinPoints || k < 2) {
    throw InvalidArgument("ICC needs n >= 3 targets and k >= 2 raters");
  }
  std::vector<double> row_mean(n, 0.0), col_mean(k, 0.0);
  double grand = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double v = ratings.at(i, j);
      if (!std::isfinite(v)) throw InvalidArgument("ratings must be finite");
      row_mean[i] += v;
      col_mean[j] += v;
      grand += v;
    }
  }
  for (auto& m : row_mean) m /= static_cast<double>(k);
  for (auto& m : col_mean) m /= static_cast<double>(n);
  grand /= static_cast<double>(n * k);

  AnovaTable t;
  double ss_rows = 0, ss_cols = 0, ss_error = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ss_rows += (row_mean[i] - grand) * (row_mean[i] - grand);
  }
  for (std::size_t j = 0; j < k; ++j) {
    ss_cols += (col_mean[j] - grand) * (col_mean[j] - grand);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double d = ratings.at(i, j) - grand;
      t.ss_total += d * d;
      const double resid = ratings.at(i, j) - row_mean[i] - col_mean[j] + grand;
      ss_error += resid * resid;
    }
  }
  const double dn = static_cast<double>(n);
  const double dk = static_cast<double>(k);
  t.ms_rows = dk * ss_rows / (dn - 1.0);
  t.ms_cols = dn * ss_cols / (dk - 1.0);
  t.ms_error = ss_error / ((dn - 1.0) * (dk - 1.0));
  return t;
}

double icc3k(const RatingMatrix& ratings) {
  const auto t = two_way_anova(ratings);
  if (t.ms_rows == 0.0) {
    throw DegenerateInput("all targets have the same mean rating");
  }
  return (t.ms_rows - t.ms_error) / t.ms_rows;
}

std::string_view to_string(Gate g) { return g == Gate::Pass ? "Pass" : "Fail"; }

Gate agreement_gate(double pearson, double spearman, double icc) {
  return pearson > kMinCorrelation && spearman > kMinCorrelation &&
                 icc > kMinIcc
             ? Gate::Pass
             : Gate::Fail;
}

AgreementReport overlap_agreement(
    const std::vector<corpus::AnnotationRecord>& overlap, bool force_include) {
  if (overlap.empty()) throw EmptyInput("overlap set is empty");
  std::set<std::string> evaluators;
  for (const auto& r : overlap) {
    if (r.lp != overlap.front().lp) {
      throw InvalidArgument("overlap set mixes language pairs");
    }
    evaluators.insert(r.evaluator_id);
  }
  if (evaluators.size() != 2) {
    throw InvalidArgument("overlap set for " + overlap.front().lp.to_string() +
                          " must have exactly 2 evaluators, found " +
                          std::to_string(evaluators.size()));
  }
  const auto z = normalize::zscore_per_evaluator(overlap);
  const std::string& rater_a = *evaluators.begin();
  const std::string& rater_b = *std::next(evaluators.begin());

  // item key -> (z from rater a, z from rater b); first annotation wins.
  std::map<std::pair<std::string, std::string>,
           std::pair<std::optional<double>, std::optional<double>>>
      items;
  for (const auto& r : z) {
    auto& slot = items[{r.source, r.mt_output}];
    auto& cell = r.evaluator_id == rater_a ? slot.first : slot.second;
    if (!cell) cell = *r.z_score;
  }
  std::vector<double> a, b;
  for (const auto& [key, v] : items) {
    if (v.first && v.second) {
      a.push_back(*v.first);
      b.push_back(*v.second);
    }
  }

  AgreementReport rep;
  rep.lp = overlap.front().lp;
  rep.n = a.size();
  rep.k = 2;
  rep.rater_a = rater_a;
  rep.rater_b = rater_b;
  rep.pearson = pearson(a, b);
  rep.spearman = spearman(a, b);
  rep.kendall = kendall_tau_b(a, b);
  rep.icc3k = icc3k(RatingMatrix::from_columns(a, b));
  rep.gate = agreement_gate(rep.pearson, rep.spearman, rep.icc3k);
  rep.included = rep.gate == Gate::Pass || force_include;
  return rep;
}

}  // namespace mteforge::agreement
