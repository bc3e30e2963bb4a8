#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mteforge/corpus.hpp"

namespace mteforge::agreement {

// Every correlation refuses fewer than this many points (DegenerateInput).
inline constexpr std::size_t kMinPoints = 3;

// Sample Pearson correlation. Throws LengthMismatch, DegenerateInput.
double pearson(std::span<const double> x, std::span<const double> y);

// Fractional ranks (1-based); tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> x);

// Pearson correlation of average ranks.
double spearman(std::span<const double> x, std::span<const double> y);

// Kendall tau-b, O(n log n) via merge-sort discordance counting.
double kendall_tau_b(std::span<const double> x, std::span<const double> y);

// Row-major n x k ratings (n targets, k raters).
class RatingMatrix {
 public:
  RatingMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
  RatingMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static RatingMatrix from_columns(std::span<const double> a,
                                   std::span<const double> b);

  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> data_;
};

// Mean squares of the two-way ANOVA without interaction.
struct AnovaTable {
  double ms_rows = 0;  // between targets
  double ms_cols = 0;  // between raters
  double ms_error = 0;
  double ss_total = 0;
};

AnovaTable two_way_anova(const RatingMatrix& ratings);

// ICC(3,k): consistency of the mean of k fixed raters.
// Throws InvalidArgument (n < 3 or k < 2), DegenerateInput (MS_R == 0).
double icc3k(const RatingMatrix& ratings);

enum class Gate { Pass, Fail };
std::string_view to_string(Gate g);

inline constexpr double kMinCorrelation = 0.4;
inline constexpr double kMinIcc = 0.5;

// Pass iff pearson > 0.4, spearman > 0.4 and icc > 0.5.
Gate agreement_gate(double pearson, double spearman, double icc);

struct AgreementReport {
  corpus::LanguagePair lp;
  std::size_t n = 0;
  std::size_t k = 2;
  double pearson = 0;
  double spearman = 0;
  double kendall = 0;
  double icc3k = 0;
  Gate gate = Gate::Fail;
  // Gate result or an explicit manual override; the gate itself never moves.
  bool included = false;
  std::string rater_a;
  std::string rater_b;
};

// Pairs the two evaluators' annotations of the same item (identical source
// and MT text) within one language pair, z-normalizes per evaluator over the
// overlap set, and computes every statistic on the z-scores.
// Throws InvalidArgument unless exactly two evaluators are present.
AgreementReport overlap_agreement(
    const std::vector<corpus::AnnotationRecord>& overlap, bool force_include);

}  // namespace mteforge::agreement
