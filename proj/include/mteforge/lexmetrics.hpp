#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mteforge::lex {

struct ChrfConfig {
  int char_order = 6;
  int word_order = 0;  // 2 for ChrF++
  double beta = 2.0;

  static ChrfConfig chrf() { return {}; }
  static ChrfConfig chrf_plus_plus() { return {6, 2, 2.0}; }
};

// Per-order n-gram statistics behind a ChrF score.
struct NgramStats {
  double hyp_count = 0;
  double ref_count = 0;
  double matches = 0;
};

// Sentence-level ChrF in [0,100]. Character n-grams ignore whitespace; word
// n-grams split on whitespace. Orders with no n-grams on either side are
// left out of the average. Throws EmptyReference.
double chrf_sentence(std::string_view hyp, std::string_view ref,
                     const ChrfConfig& cfg = {});

// The statistics chrf_sentence averages over, char orders first.
std::vector<NgramStats> chrf_statistics(std::string_view hyp,
                                        std::string_view ref,
                                        const ChrfConfig& cfg = {});

// Whitespace split after detaching punctuation characters.
std::vector<std::string> bleu_tokenize(std::string_view s);

inline constexpr std::string_view kBleuTokenizerName = "ws+punct-v1";

// Corpus BLEU in [0,100] with exponential smoothing of zero precisions.
// Orders for which the hypothesis side has no n-grams at all are left out
// of the geometric mean. Throws LengthMismatch, EmptyCorpus.
double bleu_corpus(const std::vector<std::string>& hyps,
                   const std::vector<std::string>& refs, int max_order = 4);

}  // namespace mteforge::lex
