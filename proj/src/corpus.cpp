#include "mteforge/corpus.hpp"

#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mteforge/text.hpp"

namespace mteforge::corpus {

using nlohmann::json;
using nlohmann::ordered_json;

LanguagePair::LanguagePair(std::string source_lang, std::string target_lang)
    : source_(text::to_lower_ascii(source_lang)),
      target_(text::to_lower_ascii(target_lang)) {
  if (source_.empty() || target_.empty()) {
    throw InvalidArgument("language codes must be non-empty");
  }
  if (source_ == target_) {
    throw InvalidArgument("source and target language are both '" + source_ +
                          "'");
  }
}

LanguagePair LanguagePair::parse(std::string_view id) {
  const auto dash = id.find('-');
  if (dash == std::string_view::npos || id.find('-', dash + 1) != id.npos) {
    throw InvalidArgument("language pair must look like 'eng-yor', got '" +
                          std::string(id) + "'");
  }
  return LanguagePair(std::string(id.substr(0, dash)),
                      std::string(id.substr(dash + 1)));
}

std::string_view to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Addition:
      return "Addition";
    case ErrorCategory::Omission:
      return "Omission";
    case ErrorCategory::Mistranslation:
      return "Mistranslation";
    case ErrorCategory::Untranslated:
      return "Untranslated";
  }
  return "?";
}

std::string_view to_string(Side s) {
  return s == Side::Source ? "Source" : "Target";
}

std::optional<ErrorCategory> parse_category(std::string_view s) {
  for (auto c : kAllCategories) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

std::optional<Side> parse_side(std::string_view s) {
  const auto lower = text::to_lower_ascii(s);
  if (lower == "source") return Side::Source;
  if (lower == "target") return Side::Target;
  return std::nullopt;
}

std::string_view to_string(SplitLabel label) {
  switch (label) {
    case SplitLabel::Train:
      return "Train";
    case SplitLabel::Dev:
      return "Dev";
    case SplitLabel::Test:
      return "Test";
    case SplitLabel::Excluded:
      return "Excluded";
  }
  return "?";
}

std::optional<SplitLabel> parse_split_label(std::string_view s) {
  for (auto l : {SplitLabel::Train, SplitLabel::Dev, SplitLabel::Test,
                 SplitLabel::Excluded}) {
    if (to_string(l) == s) return l;
  }
  return std::nullopt;
}

std::optional<Format> parse_format(std::string_view s) {
  if (s == "jsonl") return Format::Jsonl;
  if (s == "tsv") return Format::Tsv;
  return std::nullopt;
}

const std::string& AnnotationRecord::require_reference() const {
  if (!reference) {
    throw MissingReference("record '" + record_id + "' has no reference");
  }
  return *reference;
}

std::string validation_error(const AnnotationRecord& r) {
  if (r.record_id.empty()) return "record_id is empty";
  if (!(r.da_score >= 0.0 && r.da_score <= 100.0)) {
    return "da_score " + std::to_string(r.da_score) + " outside [0,100]";
  }
  if (r.scaled_score &&
      !(*r.scaled_score >= 0.0 && *r.scaled_score <= 1.0)) {
    return "scaled_score outside [0,1]";
  }
  for (const auto& span : r.spans) {
    const auto len = text::scalar_length(r.text_on(span.side));
    if (!(span.start < span.end && span.end <= len)) {
      return "span (" + std::to_string(span.start) + "," +
             std::to_string(span.end) + ") invalid for " +
             std::string(to_string(span.side)) + " text of length " +
             std::to_string(len);
    }
  }
  return {};
}

namespace {

// Throws std::invalid_argument with a reason; callers turn it into a
// MalformedRecord carrying the line number.
[[noreturn]] void fail(const std::string& reason) {
  throw std::invalid_argument(reason);
}

const json& require(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(std::string("missing field '") + key + "'");
  return *it;
}

std::string require_string(const json& obj, const char* key) {
  const auto& v = require(obj, key);
  if (!v.is_string()) fail(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

double require_number(const json& v, const char* key) {
  if (!v.is_number()) fail(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

ErrorSpan span_from_json(const json& s) {
  if (!s.is_object()) fail("span must be an object");
  ErrorSpan span;
  const auto cat = require_string(s, "category");
  const auto parsed_cat = parse_category(cat);
  if (!parsed_cat) fail("unknown error category '" + cat + "'");
  span.category = *parsed_cat;
  const auto side = require_string(s, "side");
  const auto parsed_side = parse_side(side);
  if (!parsed_side) fail("unknown span side '" + side + "'");
  span.side = *parsed_side;
  const auto& start = require(s, "start");
  const auto& end = require(s, "end");
  if (!start.is_number_unsigned() || !end.is_number_unsigned()) {
    fail("span offsets must be non-negative integers");
  }
  span.start = start.get<std::size_t>();
  span.end = end.get<std::size_t>();
  return span;
}

// Compact TSV span syntax: "Category:side:start:end" joined by ';'.
std::vector<ErrorSpan> parse_compact_spans(std::string_view field) {
  std::vector<ErrorSpan> spans;
  std::size_t pos = 0;
  while (pos < field.size()) {
    auto next = field.find(';', pos);
    if (next == std::string_view::npos) next = field.size();
    const auto item = field.substr(pos, next - pos);
    pos = next + 1;
    if (item.empty()) continue;
    std::vector<std::string> parts;
    std::size_t p = 0;
    while (true) {
      const auto c = item.find(':', p);
      parts.emplace_back(item.substr(p, c == item.npos ? item.npos : c - p));
      if (c == item.npos) break;
      p = c + 1;
    }
    if (parts.size() != 4) fail("span '" + std::string(item) + "' is not Category:side:start:end");
    json j = {{"category", parts[0]}, {"side", parts[1]}};
    try {
      j["start"] = std::stoull(parts[2]);
      j["end"] = std::stoull(parts[3]);
    } catch (const std::exception&) {
      fail("span offsets in '" + std::string(item) + "' are not integers");
    }
    spans.push_back(span_from_json(j));
  }
  return spans;
}

AnnotationRecord record_from_json(const json& j) {
  if (!j.is_object()) fail("line is not a JSON object");
  AnnotationRecord r;
  r.record_id = require_string(j, "record_id");
  try {
    r.lp = LanguagePair::parse(require_string(j, "lp"));
  } catch (const InvalidArgument& e) {
    fail(e.what());
  }
  r.doc_id = require_string(j, "doc_id");
  r.source = require_string(j, "source");
  r.mt_output = require_string(j, "mt_output");
  if (auto it = j.find("reference"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) fail("field 'reference' must be a string or null");
    r.reference = it->get<std::string>();
  }
  r.mt_system = require_string(j, "mt_system");
  r.evaluator_id = require_string(j, "evaluator_id");
  r.da_score = require_number(require(j, "da_score"), "da_score");
  if (auto it = j.find("spans"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) fail("field 'spans' must be an array");
    for (const auto& s : *it) r.spans.push_back(span_from_json(s));
  }
  if (auto it = j.find("z_score"); it != j.end() && !it->is_null()) {
    r.z_score = require_number(*it, "z_score");
  }
  if (auto it = j.find("scaled_score"); it != j.end() && !it->is_null()) {
    r.scaled_score = require_number(*it, "scaled_score");
  }
  if (auto reason = validation_error(r); !reason.empty()) fail(reason);
  return r;
}

std::string unescape_tsv(std::string_view field) {
  std::string out;
  out.reserve(field.size());
  for (std::size_t i = 0; i < field.size(); ++i) {
    if (field[i] == '\\' && i + 1 < field.size()) {
      const char n = field[i + 1];
      if (n == 't') {
        out.push_back('\t');
        ++i;
        continue;
      }
      if (n == 'n') {
        out.push_back('\n');
        ++i;
        continue;
      }
      if (n == '\\') {
        out.push_back('\\');
        ++i;
        continue;
      }
    }
    out.push_back(field[i]);
  }
  return out;
}

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> cols;
  std::size_t pos = 0;
  while (true) {
    const auto t = line.find('\t', pos);
    cols.emplace_back(line.substr(pos, t == line.npos ? line.npos : t - pos));
    if (t == line.npos) break;
    pos = t + 1;
  }
  return cols;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

template <typename ParseLine>
LoadResult load_lines(std::istream& in, const LoadOptions& options,
                      std::size_t first_line, ParseLine&& parse_line) {
  LoadResult result;
  std::string line;
  std::size_t line_no = first_line;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      result.records.push_back(parse_line(line));
    } catch (const std::exception& e) {
      if (!options.lenient) throw MalformedRecord(line_no, e.what());
      result.errors.push_back({line_no, e.what()});
    }
  }
  return result;
}

}  // namespace

LoadResult load_annotations(std::istream& in, const LoadOptions& options) {
  if (options.format == Format::Jsonl) {
    return load_lines(in, options, 0, [](const std::string& line) {
      json j;
      try {
        j = json::parse(line);
      } catch (const json::parse_error& e) {
        fail(std::string("invalid JSON: ") + e.what());
      }
      return record_from_json(j);
    });
  }

  std::string header_line;
  if (!std::getline(in, header_line)) return {};
  strip_cr(header_line);
  const auto header = split_tabs(header_line);
  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) column[header[i]] = i;
  for (const char* required :
       {"record_id", "lp", "doc_id", "source", "mt_output", "mt_system",
        "evaluator_id", "da_score"}) {
    if (!column.count(required)) {
      throw MalformedRecord(1, std::string("TSV header lacks column '") +
                                   required + "'");
    }
  }
  return load_lines(in, options, 1, [&](const std::string& line) {
    const auto cols = split_tabs(line);
    auto get = [&](const char* name) -> std::optional<std::string> {
      auto it = column.find(name);
      if (it == column.end() || it->second >= cols.size()) return std::nullopt;
      return unescape_tsv(cols[it->second]);
    };
    json j = json::object();
    for (const char* name : {"record_id", "lp", "doc_id", "source",
                             "mt_output", "mt_system", "evaluator_id"}) {
      auto v = get(name);
      if (!v) fail(std::string("missing column '") + name + "'");
      j[name] = *v;
    }
    const auto score = get("da_score");
    if (!score || score->empty()) fail("missing da_score");
    try {
      std::size_t used = 0;
      j["da_score"] = std::stod(*score, &used);
      if (used != score->size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      fail("da_score '" + *score + "' is not a number");
    }
    if (auto ref = get("reference"); ref && !ref->empty()) j["reference"] = *ref;
    auto record = record_from_json(j);
    if (auto spans = get("spans"); spans && !spans->empty()) {
      if ((*spans)[0] == '[') {
        json arr;
        try {
          arr = json::parse(*spans);
        } catch (const json::parse_error&) {
          fail("spans column is not valid JSON");
        }
        if (!arr.is_array()) fail("spans column must be an array");
        for (const auto& s : arr) record.spans.push_back(span_from_json(s));
      } else {
        record.spans = parse_compact_spans(*spans);
      }
      if (auto reason = validation_error(record); !reason.empty()) fail(reason);
    }
    return record;
  });
}

LoadResult load_annotations(const std::filesystem::path& path,
                            const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return load_annotations(in, options);
}

std::string to_canonical_json(const AnnotationRecord& r) {
  ordered_json j;
  j["record_id"] = r.record_id;
  j["lp"] = r.lp.to_string();
  j["doc_id"] = r.doc_id;
  j["source"] = r.source;
  j["mt_output"] = r.mt_output;
  j["reference"] = r.reference ? ordered_json(*r.reference) : ordered_json();
  j["mt_system"] = r.mt_system;
  j["evaluator_id"] = r.evaluator_id;
  j["da_score"] = r.da_score;
  auto spans = ordered_json::array();
  for (const auto& s : r.spans) {
    ordered_json o;
    o["category"] = to_string(s.category);
    o["side"] = to_string(s.side);
    o["start"] = s.start;
    o["end"] = s.end;
    spans.push_back(std::move(o));
  }
  j["spans"] = std::move(spans);
  if (r.z_score) j["z_score"] = *r.z_score;
  if (r.scaled_score) j["scaled_score"] = *r.scaled_score;
  return j.dump(-1, ' ', false, ordered_json::error_handler_t::replace);
}

void save_annotations(std::ostream& out,
                      const std::vector<AnnotationRecord>& records) {
  for (const auto& r : records) out << to_canonical_json(r) << '\n';
}

void save_annotations(const std::filesystem::path& path,
                      const std::vector<AnnotationRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  save_annotations(out, records);
}

bool passes_parallel_filter(const AlignmentCandidate& c, double lid_threshold,
                            double sim_threshold) {
  return c.src_lid_conf > lid_threshold && c.tgt_lid_conf > lid_threshold &&
         c.similarity > sim_threshold;
}

std::vector<AlignmentCandidate> filter_parallel_candidates(
    const std::vector<AlignmentCandidate>& candidates, double lid_threshold,
    double sim_threshold) {
  if (!(lid_threshold >= 0.0 && lid_threshold <= 1.0) ||
      !(sim_threshold >= 0.0 && sim_threshold <= 1.0)) {
    throw InvalidArgument("filter thresholds must lie in [0,1]");
  }
  std::vector<AlignmentCandidate> out;
  for (const auto& c : candidates) {
    if (passes_parallel_filter(c, lid_threshold, sim_threshold)) {
      out.push_back(c);
    }
  }
  return out;
}

std::vector<std::pair<LanguagePair, std::vector<AnnotationRecord>>> group_by_lp(
    const std::vector<AnnotationRecord>& records) {
  std::map<LanguagePair, std::vector<AnnotationRecord>> groups;
  for (const auto& r : records) groups[r.lp].push_back(r);
  return {groups.begin(), groups.end()};
}

}  // namespace mteforge::corpus
