#include "mteforge/split.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include "mteforge/random.hpp"

namespace mteforge::split {

using corpus::SplitLabel;

std::map<std::string, SplitLabel> document_labels(
    const std::vector<corpus::AnnotationRecord>& records,
    const SplitOptions& options) {
  std::set<std::string> doc_set;
  for (const auto& r : records) doc_set.insert(r.doc_id);
  const std::size_t needed = options.n_test_docs + options.n_dev_docs + 1;
  if (doc_set.size() < needed) {
    throw TooFewDocuments("need at least " + std::to_string(needed) +
                          " documents, found " + std::to_string(doc_set.size()));
  }
  // Sorted order first so the shuffle does not depend on record order.
  std::vector<std::string> docs(doc_set.begin(), doc_set.end());
  Rng rng(options.seed);
  rng.shuffle(std::span<std::string>(docs));

  std::map<std::string, SplitLabel> labels;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    SplitLabel label = SplitLabel::Train;
    if (i < options.n_test_docs) {
      label = SplitLabel::Test;
    } else if (i < options.n_test_docs + options.n_dev_docs) {
      label = SplitLabel::Dev;
    }
    labels[docs[i]] = label;
  }
  return labels;
}

Assignment document_split(const std::vector<corpus::AnnotationRecord>& records,
                          const std::set<std::string>& overlap_ids,
                          const SplitOptions& options) {
  const auto labels = document_labels(records, options);
  Assignment out;
  for (const auto& r : records) {
    SplitLabel label;
    if (overlap_ids.count(r.record_id)) {
      label = SplitLabel::Excluded;
    } else if (options.train_only_lps.count(r.lp.to_string())) {
      label = SplitLabel::Train;
    } else {
      label = labels.at(r.doc_id);
    }
    if (!out.emplace(r.record_id, label).second) {
      throw DuplicateId("record id '" + r.record_id + "' appears twice");
    }
  }
  return out;
}

void write_assignment(std::ostream& out, const Assignment& assignment) {
  out << "record_id\tsplit\n";
  for (const auto& [id, label] : assignment) {
    out << id << '\t' << corpus::to_string(label) << '\n';
  }
}

Assignment read_assignment(std::istream& in) {
  Assignment out;
  std::string line;
  bool header = true;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    const auto label =
        tab == line.npos ? std::nullopt
                         : corpus::parse_split_label(line.substr(tab + 1));
    if (!label) {
      throw MalformedRecord(line_no, "expected '<record_id>\\t<split>'");
    }
    out[line.substr(0, tab)] = *label;
  }
  return out;
}

}  // namespace mteforge::split
