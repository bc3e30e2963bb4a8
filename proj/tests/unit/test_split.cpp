#include <gtest/gtest.h>

#include <sstream>

#include "mteforge/split.hpp"
#include "synth.hpp"

using namespace mteforge;
using namespace mteforge::split;
using corpus::SplitLabel;

namespace {

// Two LPs sharing the same 60 source documents, three records per doc each.
std::vector<corpus::AnnotationRecord> sixty_docs() {
  std::vector<corpus::AnnotationRecord> recs;
  for (const char* lp : {"eng-yor", "eng-hau"}) {
    for (int d = 0; d < 60; ++d) {
      for (int k = 0; k < 3; ++k) {
        recs.push_back(synth::rec(std::string(lp) + "-" + std::to_string(d) + "-" + std::to_string(k), 50,
                                  "s", "m", "r", lp, "doc" + std::to_string(d)));
      }
    }
  }
  return recs;
}

}  // namespace

TEST(Split, CountsDisjointnessAndDeterminismOverSeeds) {
  const auto recs = sixty_docs();
  std::set<std::string> overlap;
  for (int i = 0; i < 30; ++i) overlap.insert(recs[i * 11].record_id);
  std::set<std::vector<std::string>> distinct_test_sets;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SplitOptions opt;
    opt.seed = seed;
    const auto a = document_split(recs, overlap, opt);
    EXPECT_EQ(a, document_split(recs, overlap, opt));
    std::map<std::string, std::set<SplitLabel>> doc_labels;
    std::map<SplitLabel, std::set<std::string>> docs_of;
    for (const auto& r : recs) {
      const auto label = a.at(r.record_id);
      if (overlap.count(r.record_id)) {
        EXPECT_EQ(label, SplitLabel::Excluded);
        continue;
      }
      EXPECT_NE(label, SplitLabel::Excluded);
      doc_labels[r.doc_id].insert(label);
      docs_of[label].insert(r.doc_id);
    }
    for (const auto& [doc, labels] : doc_labels) EXPECT_EQ(labels.size(), 1u) << doc;
    EXPECT_EQ(docs_of[SplitLabel::Test].size(), 40u);
    EXPECT_EQ(docs_of[SplitLabel::Dev].size(), 10u);
    EXPECT_EQ(docs_of[SplitLabel::Train].size(), 10u);
    distinct_test_sets.insert({docs_of[SplitLabel::Test].begin(), docs_of[SplitLabel::Test].end()});
  }
  EXPECT_GT(distinct_test_sets.size(), 90u);
}

TEST(Split, IndependentOfRecordOrder) {
  auto recs = sixty_docs();
  SplitOptions opt;
  opt.seed = 5;
  const auto a = document_split(recs, {}, opt);
  Rng rng(1);
  rng.shuffle(std::span(recs));
  EXPECT_EQ(document_split(recs, {}, opt), a);
}

TEST(Split, OverlapExclusionWinsOverTest) {
  const auto recs = sixty_docs();
  SplitOptions opt;
  const auto labels = document_labels(recs, opt);
  std::string test_record;
  for (const auto& r : recs) {
    if (labels.at(r.doc_id) == SplitLabel::Test) {
      test_record = r.record_id;
      break;
    }
  }
  const auto a = document_split(recs, {test_record}, opt);
  EXPECT_EQ(a.at(test_record), SplitLabel::Excluded);
  // Its document stays eligible for the other records.
  EXPECT_EQ(document_labels(recs, opt), labels);
}

TEST(Split, LanguagePairsShareDocumentLabels) {
  const auto a = document_split(sixty_docs(), {}, {});
  for (int d = 0; d < 60; ++d) {
    EXPECT_EQ(a.at("eng-yor-" + std::to_string(d) + "-0"), a.at("eng-hau-" + std::to_string(d) + "-2"));
  }
}

TEST(Split, TrainOnlyLanguagePairs) {
  SplitOptions opt;
  opt.train_only_lps = {"eng-hau"};
  const auto recs = sixty_docs();
  const auto a = document_split(recs, {"eng-hau-0-0"}, opt);
  for (const auto& r : recs) {
    if (r.lp.to_string() != "eng-hau") continue;
    EXPECT_EQ(a.at(r.record_id), r.record_id == "eng-hau-0-0" ? SplitLabel::Excluded : SplitLabel::Train);
  }
}

TEST(Split, TooFewDocuments) {
  std::vector<corpus::AnnotationRecord> recs;
  for (int d = 0; d < 50; ++d) recs.push_back(synth::rec("r" + std::to_string(d), 1, "s", "m", "r", "eng-yor", "d" + std::to_string(d)));
  EXPECT_THROW(document_split(recs, {}, {}), TooFewDocuments);
  recs.push_back(synth::rec("extra", 1, "s", "m", "r", "eng-yor", "d50"));
  EXPECT_NO_THROW(document_split(recs, {}, {}));
}

TEST(Split, DuplicateRecordIdRejected) {
  auto recs = sixty_docs();
  recs.push_back(recs.front());
  EXPECT_THROW(document_split(recs, {}, {}), DuplicateId);
}

TEST(Split, AssignmentTsvRoundTrip) {
  const auto a = document_split(sixty_docs(), {"eng-yor-1-1"}, {});
  std::stringstream ss;
  write_assignment(ss, a);
  EXPECT_EQ(read_assignment(ss), a);
  std::istringstream bad("record_id\tsplit\nx\tNope\n");
  EXPECT_THROW(read_assignment(bad), MalformedRecord);
}
