#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mteforge/corpus.hpp"

namespace mteforge::split {

struct SplitOptions {
  std::size_t n_test_docs = 40;
  std::size_t n_dev_docs = 10;
  std::uint64_t seed = 0;
  // Language pairs whose non-excluded records all go to Train.
  std::set<std::string> train_only_lps;
};

using Assignment = std::map<std::string, corpus::SplitLabel>;

// Document-level assignment. Overlap records are Excluded but their
// documents stay eligible; the remaining documents are shuffled (seeded) and
// the first n_test become Test, the next n_dev Dev, the rest Train. Labels
// depend only on doc_id, so language pairs sharing source documents share
// splits. Throws TooFewDocuments.
Assignment document_split(const std::vector<corpus::AnnotationRecord>& records,
                          const std::set<std::string>& overlap_ids,
                          const SplitOptions& options);

// Per-document labels behind document_split (before exclusions).
std::map<std::string, corpus::SplitLabel> document_labels(
    const std::vector<corpus::AnnotationRecord>& records,
    const SplitOptions& options);

void write_assignment(std::ostream& out, const Assignment& assignment);
Assignment read_assignment(std::istream& in);

}  // namespace mteforge::split
