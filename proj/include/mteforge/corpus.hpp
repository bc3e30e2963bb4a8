#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mteforge/errors.hpp"

namespace mteforge::corpus {

class LanguagePair {
 public:
  LanguagePair() = default;
  // Throws InvalidArgument when either code is empty or both are equal.
  LanguagePair(std::string source_lang, std::string target_lang);

  // Parses "<src>-<tgt>"; case-insensitive.
  static LanguagePair parse(std::string_view id);

  const std::string& source_lang() const { return source_; }
  const std::string& target_lang() const { return target_; }
  std::string to_string() const { return source_ + "-" + target_; }

  auto operator<=>(const LanguagePair&) const = default;

 private:
  std::string source_;
  std::string target_;
};

enum class ErrorCategory { Addition, Omission, Mistranslation, Untranslated };
enum class Side { Source, Target };

inline constexpr ErrorCategory kAllCategories[] = {
    ErrorCategory::Mistranslation, ErrorCategory::Omission,
    ErrorCategory::Addition, ErrorCategory::Untranslated};

std::string_view to_string(ErrorCategory c);
std::string_view to_string(Side s);
std::optional<ErrorCategory> parse_category(std::string_view s);
std::optional<Side> parse_side(std::string_view s);

// Offsets are Unicode scalar-value indices into the text on `side`.
struct ErrorSpan {
  ErrorCategory category = ErrorCategory::Mistranslation;
  Side side = Side::Target;
  std::size_t start = 0;
  std::size_t end = 0;

  bool operator==(const ErrorSpan&) const = default;
};

struct AnnotationRecord {
  std::string record_id;
  LanguagePair lp;
  std::string doc_id;
  std::string source;
  std::string mt_output;
  std::optional<std::string> reference;
  std::string mt_system;
  std::string evaluator_id;
  double da_score = 0.0;
  std::vector<ErrorSpan> spans;
  std::optional<double> z_score;
  std::optional<double> scaled_score;

  const std::string& text_on(Side side) const {
    return side == Side::Source ? source : mt_output;
  }
  // Throws MissingReference.
  const std::string& require_reference() const;

  bool operator==(const AnnotationRecord&) const = default;
};

// Returns an empty string when the record satisfies every invariant,
// otherwise a human-readable reason.
std::string validation_error(const AnnotationRecord& r);

struct AlignmentCandidate {
  std::string src_text;
  std::string tgt_text;
  double src_lid_conf = 0.0;
  double tgt_lid_conf = 0.0;
  double similarity = 0.0;

  bool operator==(const AlignmentCandidate&) const = default;
};

enum class SplitLabel { Train, Dev, Test, Excluded };
std::string_view to_string(SplitLabel label);
std::optional<SplitLabel> parse_split_label(std::string_view s);

enum class Format { Jsonl, Tsv };
std::optional<Format> parse_format(std::string_view s);

struct LoadOptions {
  Format format = Format::Jsonl;
  // When set, malformed lines are collected in LoadResult::errors instead of
  // aborting on the first one.
  bool lenient = false;
};

struct LoadError {
  std::size_t line = 0;
  std::string reason;
};

struct LoadResult {
  std::vector<AnnotationRecord> records;
  std::vector<LoadError> errors;
};

LoadResult load_annotations(std::istream& in, const LoadOptions& options);
LoadResult load_annotations(const std::filesystem::path& path,
                            const LoadOptions& options);

// Canonical JSONL: fixed field order, one record per line, `reference` is
// null when absent, z_score/scaled_score only when present.
std::string to_canonical_json(const AnnotationRecord& r);
void save_annotations(std::ostream& out,
                      const std::vector<AnnotationRecord>& records);
void save_annotations(const std::filesystem::path& path,
                      const std::vector<AnnotationRecord>& records);

// Strict: kept iff both LID confidences exceed `lid_threshold` and the
// similarity exceeds `sim_threshold`.
bool passes_parallel_filter(const AlignmentCandidate& c,
                            double lid_threshold = 0.99,
                            double sim_threshold = 0.925);
std::vector<AlignmentCandidate> filter_parallel_candidates(
    const std::vector<AlignmentCandidate>& candidates,
    double lid_threshold = 0.99, double sim_threshold = 0.925);

inline std::pair<std::string_view, std::string_view> dedup_key(
    const AnnotationRecord& r) {
  return {r.source, r.mt_output};
}
inline std::pair<std::string_view, std::string_view> dedup_key(
    const AlignmentCandidate& c) {
  return {c.src_text, c.tgt_text};
}

// Keeps the first occurrence of each (source, target) text pair.
template <typename T>
std::vector<T> deduplicate(const std::vector<T>& items) {
  std::set<std::pair<std::string_view, std::string_view>> seen;
  std::vector<T> out;
  out.reserve(items.size());
  for (const auto& item : items) {
    if (seen.insert(dedup_key(item)).second) out.push_back(item);
  }
  return out;
}

// Groups records by language pair, preserving relative order.
std::vector<std::pair<LanguagePair, std::vector<AnnotationRecord>>> group_by_lp(
    const std::vector<AnnotationRecord>& records);

}  // namespace mteforge::corpus
