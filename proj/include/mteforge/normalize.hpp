#pragma once

#include <span>
#include <vector>

#include "mteforge/corpus.hpp"

namespace mteforge::normalize {

inline constexpr std::size_t kDefaultExtremes = 800;

struct ScaleBounds {
  double z_min = 0.0;
  double z_max = 1.0;
  // Extremes actually averaged on each side.
  std::size_t m = kDefaultExtremes;
  // True when fewer than the requested m values were available.
  bool shrunk = false;
};

// z = (da - mean_e) / sd_e per evaluator, with the n-1 sample deviation.
// Throws DegenerateEvaluator when an evaluator has < 2 records or constant
// scores.
std::vector<corpus::AnnotationRecord> zscore_per_evaluator(
    const std::vector<corpus::AnnotationRecord>& records);

// Averages of the m lowest and m highest values. m shrinks to
// max(1, |z|/2) when the input is too small (ScaleBounds::shrunk is set). Throws EmptyInput and
// DegenerateInput (z_min == z_max).
ScaleBounds global_minmax_bounds(std::span<const double> z,
                                 std::size_t m = kDefaultExtremes);

// clamp((z - z_min) / (z_max - z_min), 0, 1).
double scale_clip(double z, const ScaleBounds& bounds);

// Fills z_score per evaluator inside each language pair. Throws EmptyInput.
std::vector<corpus::AnnotationRecord> standardize_test(
    const std::vector<corpus::AnnotationRecord>& records);

// The full training-side pipeline: evaluator z-scores, pooled bounds over
// every record, then scaled_score = scale_clip(z).
struct NormalizeResult {
  std::vector<corpus::AnnotationRecord> records;
  ScaleBounds bounds;
};
NormalizeResult normalize_scores(
    const std::vector<corpus::AnnotationRecord>& records,
    std::size_t m = kDefaultExtremes);

}  // namespace mteforge::normalize
