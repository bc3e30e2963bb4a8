#include <gtest/gtest.h>

#include <sstream>

#include "mteforge/corpus.hpp"
#include "mteforge/text.hpp"
#include "synth.hpp"

using namespace mteforge;
using namespace mteforge::corpus;

namespace {

LoadResult load_str(const std::string& s, Format f = Format::Jsonl, bool lenient = false) {
  std::istringstream in(s);
  return load_annotations(in, {f, lenient});
}

std::string jsonl_line(const std::string& id, double da, const std::string& extra = "") {
  return R"({"record_id":")" + id +
         R"(","lp":"eng-yor","doc_id":"d1","source":"Hello there","mt_output":"Bawo ni",)"
         R"("reference":"E kaabo","mt_system":"s1","evaluator_id":"e1","da_score":)" +
         std::to_string(da) + extra + "}\n";
}

}  // namespace

TEST(Text, ScalarOffsetsCountCodePoints) {
  const std::string s = "ọ̀rẹ́ ẹ";  // combining marks are separate scalars
  EXPECT_EQ(text::scalar_length("abc"), 3u);
  EXPECT_EQ(text::scalar_length("é"), 1u);
  EXPECT_EQ(text::decode_utf8(s).size(), text::scalar_length(s));
  EXPECT_EQ(text::encode_utf8(text::decode_utf8(s)), s);
  EXPECT_EQ(text::substr_scalars("aéb", 1, 2), "é");
}

TEST(Text, InvalidBytesDecodeOneByOne) {
  const std::string bad = "a\xff" "b";
  EXPECT_EQ(text::scalar_length(bad), 3u);
}

TEST(LanguagePairTest, ParseAndValidate) {
  const auto lp = LanguagePair::parse("ENG-Yor");
  EXPECT_EQ(lp.to_string(), "eng-yor");
  EXPECT_THROW(LanguagePair::parse("eng"), InvalidArgument);
  EXPECT_THROW(LanguagePair::parse("eng-eng"), InvalidArgument);
  EXPECT_THROW(LanguagePair("", "yor"), InvalidArgument);
}

TEST(Load, ThreeLinesKeepOrder) {
  const auto res = load_str(jsonl_line("b", 10) + jsonl_line("a", 20) + jsonl_line("c", 30));
  ASSERT_EQ(res.records.size(), 3u);
  EXPECT_EQ(res.records[0].record_id, "b");
  EXPECT_EQ(res.records[1].record_id, "a");
  EXPECT_EQ(res.records[2].record_id, "c");
  EXPECT_EQ(res.records[2].da_score, 30.0);
}

TEST(Load, ScoreAbove100IsMalformed) {
  try {
    load_str(jsonl_line("a", 50) + jsonl_line("b", 105));
    FAIL() << "expected MalformedRecord";
  } catch (const MalformedRecord& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(e.reason().find("da_score"), std::string::npos);
  }
}

TEST(Load, SpanBeyondTextIsMalformed) {
  // "0123456789" has 10 scalars; (4,12) overruns it.
  const std::string line =
      R"({"record_id":"x","lp":"eng-yor","doc_id":"d","source":"s","mt_output":"0123456789",)"
      R"("reference":null,"mt_system":"m","evaluator_id":"e","da_score":40,)"
      R"("spans":[{"category":"Omission","side":"target","start":4,"end":12}]})";
  EXPECT_THROW(load_str(line), MalformedRecord);
  const std::string ok = std::string(line).replace(line.find("12}"), 2, "10");
  EXPECT_EQ(load_str(ok).records.at(0).spans.at(0).end, 10u);
}

TEST(Load, UnknownFieldsIgnoredReferenceOptional) {
  const std::string line =
      R"({"record_id":"x","lp":"eng-yor","doc_id":"d","source":"s","mt_output":"m",)"
      R"("mt_system":"m","evaluator_id":"e","da_score":40,"extra":[1,2]})";
  const auto r = load_str(line).records.at(0);
  EXPECT_FALSE(r.reference.has_value());
  EXPECT_THROW(r.require_reference(), MissingReference);
}

TEST(Load, LenientCollectsErrors) {
  const auto res =
      load_str(jsonl_line("a", 50) + "not json\n" + jsonl_line("b", 101) + jsonl_line("c", 1), Format::Jsonl,
               true);
  EXPECT_EQ(res.records.size(), 2u);
  ASSERT_EQ(res.errors.size(), 2u);
  EXPECT_EQ(res.errors[0].line, 2u);
  EXPECT_EQ(res.errors[1].line, 3u);
}

TEST(Load, MissingFieldNamed) {
  try {
    load_str(R"({"record_id":"x"})");
    FAIL();
  } catch (const MalformedRecord& e) {
    EXPECT_NE(e.reason().find("lp"), std::string::npos);
  }
}

TEST(Load, TsvWithCompactAndJsonSpans) {
  const std::string tsv =
      "record_id\tlp\tdoc_id\tsource\tmt_output\treference\tmt_system\tevaluator_id\tda_score\tspans\n"
      "r1\teng-hau\td1\tHello\tSannu\t\ts\te\t70\tOmission:target:0:2;Addition:source:1:3\n"
      "r2\teng-hau\td1\ttab\\there\tok\tref\ts\te\t99\t[{\"category\":\"Untranslated\",\"side\":\"Target\",\"start\":0,\"end\":1}]\n";
  const auto res = load_str(tsv, Format::Tsv);
  ASSERT_EQ(res.records.size(), 2u);
  EXPECT_FALSE(res.records[0].reference);
  ASSERT_EQ(res.records[0].spans.size(), 2u);
  EXPECT_EQ(res.records[0].spans[1].side, Side::Source);
  EXPECT_EQ(res.records[1].source, "tab\there");
  EXPECT_EQ(res.records[1].spans.at(0).category, ErrorCategory::Untranslated);
}

TEST(Load, TsvHeaderMustNameRequiredColumns) {
  EXPECT_THROW(load_str("record_id\tlp\n", Format::Tsv), MalformedRecord);
}

TEST(Canonical, RoundTripIsByteIdentical) {
  auto recs = synth::corpus({.records = 40, .docs = 10});
  recs[3].reference.reset();
  recs[4].z_score = -0.25;
  recs[4].scaled_score = 0.125;
  recs[5].source = "Ẹ káàbọ̀ \"quoted\"\ttab";
  std::ostringstream first;
  save_annotations(first, recs);
  std::istringstream in(first.str());
  const auto back = load_annotations(in, {}).records;
  EXPECT_EQ(back, recs);
  std::ostringstream second;
  save_annotations(second, back);
  EXPECT_EQ(second.str(), first.str());
}

TEST(ParallelFilter, StrictThresholds) {
  EXPECT_TRUE(passes_parallel_filter({"a", "b", 0.995, 0.999, 0.93}));
  EXPECT_FALSE(passes_parallel_filter({"a", "b", 0.99, 0.99, 0.925}));
  EXPECT_FALSE(passes_parallel_filter({"a", "b", 0.999, 0.999, 0.925}));
  EXPECT_TRUE(filter_parallel_candidates({}).empty());
}

TEST(ParallelFilter, RandomCandidatesMatchPredicateOracle) {
  Rng rng(7);
  std::vector<AlignmentCandidate> cands;
  for (int i = 0; i < 100; ++i) {
    cands.push_back({"s" + std::to_string(i), "t" + std::to_string(i), rng.uniform(0.97, 1.0),
                     rng.uniform(0.97, 1.0), rng.uniform(0.85, 1.0)});
  }
  const auto kept = filter_parallel_candidates(cands);
  std::vector<AlignmentCandidate> expected;
  for (const auto& c : cands) {
    if (c.src_lid_conf > 0.99 && c.tgt_lid_conf > 0.99 && c.similarity > 0.925) expected.push_back(c);
  }
  EXPECT_EQ(kept, expected);
  EXPECT_GT(kept.size(), 0u);
  EXPECT_LT(kept.size(), cands.size());
}

TEST(Dedup, FirstOccurrenceKept) {
  std::vector<AnnotationRecord> recs = {synth::rec("a", 1, "x", "y"), synth::rec("b", 2, "x", "y"),
                                        synth::rec("c", 3, "x", "z")};
  const auto out = deduplicate(recs);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].record_id, "a");
  EXPECT_EQ(out[1].record_id, "c");
}

TEST(Dedup, PlantedDuplicatesAndIdempotence) {
  Rng rng(3);
  std::vector<AnnotationRecord> recs;
  for (int i = 0; i < 43; ++i) {
    recs.push_back(synth::rec("r" + std::to_string(i), 50, "src " + std::to_string(i), "mt"));
  }
  for (int k = 0; k < 7; ++k) {
    auto dup = recs[rng.index(43)];
    dup.record_id = "dup" + std::to_string(k);
    dup.da_score = 1;
    recs.insert(recs.begin() + static_cast<long>(43 + rng.index(recs.size() - 42)), dup);
  }
  ASSERT_EQ(recs.size(), 50u);
  std::set<std::pair<std::string, std::string>> keys;
  for (const auto& r : recs) keys.insert({r.source, r.mt_output});
  const auto once = deduplicate(recs);
  EXPECT_EQ(once.size(), keys.size());
  EXPECT_EQ(once.size(), 43u);
  EXPECT_EQ(deduplicate(once), once);
}

TEST(GroupByLp, PreservesOrder) {
  std::vector<AnnotationRecord> recs = {synth::rec("a", 1, "s", "m", "r", "eng-hau"),
                                        synth::rec("b", 1, "s", "m", "r", "eng-yor"),
                                        synth::rec("c", 1, "s", "m", "r", "eng-hau")};
  const auto groups = group_by_lp(recs);
  ASSERT_EQ(groups.size(), 2u);
  EXPECT_EQ(groups[0].first.to_string(), "eng-hau");
  EXPECT_EQ(groups[0].second.at(1).record_id, "c");
}
