#include "mteforge/lexmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "mteforge/errors.hpp"
#include "mteforge/text.hpp"

namespace mteforge::lex {

namespace {

template <typename Seq>
std::map<Seq, int> count_ngrams(const std::vector<typename Seq::value_type>& units,
                                int n) {
  std::map<Seq, int> counts;
  if (n <= 0 || units.size() < static_cast<std::size_t>(n)) return counts;
  for (std::size_t i = 0; i + n <= units.size(); ++i) {
    ++counts[Seq(units.begin() + i, units.begin() + i + n)];
  }
  return counts;
}

template <typename Map>
NgramStats compare(const Map& hyp, const Map& ref) {
  NgramStats s;
  for (const auto& [g, c] : hyp) s.hyp_count += c;
  for (const auto& [g, c] : ref) {
    s.ref_count += c;
    if (auto it = hyp.find(g); it != hyp.end()) {
      s.matches += std::min(c, it->second);
    }
  }
  return s;
}

std::vector<char32_t> chars_without_space(std::string_view s) {
  std::vector<char32_t> out;
  for (char32_t c : text::decode_utf8(s)) {
    if (!text::is_space(c)) out.push_back(c);
  }
  return out;
}

}  // namespace

std::vector<NgramStats> chrf_statistics(std::string_view hyp,
                                        std::string_view ref,
                                        const ChrfConfig& cfg) {
  if (cfg.char_order < 1 || cfg.word_order < 0 || !(cfg.beta > 0.0)) {
    throw InvalidArgument("invalid ChrF configuration");
  }
  std::vector<NgramStats> stats;
  const auto hc = chars_without_space(hyp);
  const auto rc = chars_without_space(ref);
  for (int n = 1; n <= cfg.char_order; ++n) {
    stats.push_back(compare(count_ngrams<std::u32string>(hc, n),
                            count_ngrams<std::u32string>(rc, n)));
  }
  if (cfg.word_order > 0) {
    const auto hw = text::split_whitespace(hyp);
    const auto rw = text::split_whitespace(ref);
    for (int n = 1; n <= cfg.word_order; ++n) {
      stats.push_back(
          compare(count_ngrams<std::vector<std::string>>(hw, n),
                  count_ngrams<std::vector<std::string>>(rw, n)));
    }
  }
  return stats;
}

double chrf_sentence(std::string_view hyp, std::string_view ref,
                     const ChrfConfig& cfg) {
  if (chars_without_space(ref).empty()) {
    throw EmptyReference("ChrF needs a non-empty reference");
  }
  const double beta2 = cfg.beta * cfg.beta;
  double total = 0.0;
  int orders = 0;
  for (const auto& s : chrf_statistics(hyp, ref, cfg)) {
    if (s.hyp_count == 0 && s.ref_count == 0) continue;
    ++orders;
    const double p = s.hyp_count > 0 ? s.matches / s.hyp_count : 0.0;
    const double r = s.ref_count > 0 ? s.matches / s.ref_count : 0.0;
    const double denom = beta2 * p + r;
    if (denom > 0.0) total += (1.0 + beta2) * p * r / denom;
  }
  return orders == 0 ? 0.0 : 100.0 * total / orders;
}

std::vector<std::string> bleu_tokenize(std::string_view s) {
  std::u32string spaced;
  for (char32_t c : text::decode_utf8(s)) {
    if (text::is_punct(c)) {
      spaced.push_back(U' ');
      spaced.push_back(c);
      spaced.push_back(U' ');
    } else {
      spaced.push_back(c);
    }
  }
  return text::split_whitespace(text::encode_utf8(spaced));
}

double bleu_corpus(const std::vector<std::string>& hyps,
                   const std::vector<std::string>& refs, int max_order) {
  if (hyps.size() != refs.size()) {
    throw LengthMismatch(std::to_string(hyps.size()) + " hypotheses vs " +
                         std::to_string(refs.size()) + " references");
  }
  if (hyps.empty()) throw EmptyCorpus("BLEU needs at least one segment");
  if (max_order < 1) throw InvalidArgument("max_order must be >= 1");

  std::vector<double> matches(max_order, 0.0);
  std::vector<double> totals(max_order, 0.0);
  double hyp_len = 0.0;
  double ref_len = 0.0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const auto h = bleu_tokenize(hyps[i]);
    const auto r = bleu_tokenize(refs[i]);
    hyp_len += static_cast<double>(h.size());
    ref_len += static_cast<double>(r.size());
    for (int n = 1; n <= max_order; ++n) {
      const auto s = compare(count_ngrams<std::vector<std::string>>(h, n),
                             count_ngrams<std::vector<std::string>>(r, n));
      matches[n - 1] += s.matches;
      totals[n - 1] += s.hyp_count;
    }
  }
  if (hyp_len == 0.0) return 0.0;

  double log_sum = 0.0;
  int used = 0;
  double smooth = 1.0;
  for (int n = 0; n < max_order; ++n) {
    if (totals[n] == 0.0) continue;
    double p;
    if (matches[n] == 0.0) {
      smooth *= 2.0;
      p = 1.0 / (smooth * totals[n]);
    } else {
      p = matches[n] / totals[n];
    }
    log_sum += std::log(p);
    ++used;
  }
  const double bp =
      hyp_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
  return 100.0 * bp * std::exp(log_sum / used);
}

}  // namespace mteforge::lex
