#include "mteforge/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "mteforge/errors.hpp"
#include "mteforge/text.hpp"

namespace mteforge::config {

namespace {

using nlohmann::json;

class Parser {
 public:
  explicit Parser(std::string_view s) : s_(s) {}

  json run() {
    json root = json::object();
    json* table = &root;
    while (true) {
      skip_blank_lines();
      if (eof()) break;
      if (peek() == '[') {
        table = parse_header(root);
      } else {
        auto path = parse_key();
        skip_ws();
        expect('=');
        skip_ws();
        json value = parse_value();
        assign(*table, path, std::move(value));
      }
      end_of_line();
    }
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("line " + std::to_string(line_) + ": " + what);
  }

  bool eof() const { return pos_ >= s_.size(); }
  char peek(std::size_t ahead = 0) const {
    return pos_ + ahead < s_.size() ? s_[pos_ + ahead] : '\0';
  }
  char take() {
    const char c = s_[pos_++];
    if (c == '\n') ++line_;
    return c;
  }
  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    take();
  }

  void skip_ws() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) take();
  }
  void skip_comment() {
    if (peek() == '#') {
      while (!eof() && peek() != '\n') take();
    }
  }
  void skip_blank_lines() {
    while (!eof()) {
      skip_ws();
      skip_comment();
      if (peek() == '\r') take();
      if (peek() == '\n') {
        take();
      } else {
        break;
      }
    }
  }
  // Whitespace, comments and newlines inside arrays.
  void skip_ws_nl() {
    while (!eof()) {
      skip_ws();
      skip_comment();
      if (peek() == '\n' || peek() == '\r') {
        take();
      } else {
        break;
      }
    }
  }
  void end_of_line() {
    skip_ws();
    skip_comment();
    if (peek() == '\r') take();
    if (!eof() && peek() != '\n') fail("unexpected trailing characters");
  }

  static bool bare_key_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '_' || c == '-';
  }

  std::vector<std::string> parse_key() {
    std::vector<std::string> path;
    while (true) {
      skip_ws();
      if (peek() == '"') {
        path.push_back(parse_basic_string());
      } else if (peek() == '\'') {
        path.push_back(parse_literal_string());
      } else {
        std::string k;
        while (bare_key_char(peek())) k += take();
        if (k.empty()) fail("expected a key");
        path.push_back(k);
      }
      skip_ws();
      if (peek() != '.') break;
      take();
    }
    return path;
  }

  json* parse_header(json& root) {
    take();
    const bool array = peek() == '[';
    if (array) take();
    auto path = parse_key();
    expect(']');
    if (array) expect(']');
    json* node = &root;
    std::string where;  // path with array-of-tables element indices
    for (std::size_t i = 0; i < path.size(); ++i) {
      json& child = (*node)[path[i]];
      where += "\x1f" + path[i];
      const bool last = i + 1 == path.size();
      if (last && array) {
        if (child.is_null()) child = json::array();
        if (!child.is_array()) fail("'" + path[i] + "' is not an array of tables");
        child.push_back(json::object());
        return &child.back();
      }
      if (child.is_null()) child = json::object();
      if (child.is_array() && !child.empty() && child.back().is_object()) {
        where += "#" + std::to_string(child.size() - 1);
        node = &child.back();
        continue;
      }
      if (!child.is_object()) fail("'" + path[i] + "' is not a table");
      node = &child;
    }
    if (!defined_.insert(where).second) fail("table defined twice");
    return node;
  }

  void assign(json& table, const std::vector<std::string>& path, json value) {
    json* node = &table;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      json& child = (*node)[path[i]];
      if (child.is_null()) child = json::object();
      if (!child.is_object()) fail("'" + path[i] + "' is not a table");
      node = &child;
    }
    if (node->contains(path.back())) fail("duplicate key '" + path.back() + "'");
    (*node)[path.back()] = std::move(value);
  }

  std::string parse_basic_string() {
    take();
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') fail("unterminated string");
      char c = take();
      if (c == '"') break;
      if (c != '\\') {
        out += c;
        continue;
      }
      const char e = take();
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case 'b': out += '\b'; break;
        case 'f': out += '\f'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'u':
        case 'U': {
          const int n = e == 'u' ? 4 : 8;
          if (pos_ + static_cast<std::size_t>(n) > s_.size()) fail("short unicode escape");
          std::uint32_t cp = 0;
          const auto hex = s_.substr(pos_, static_cast<std::size_t>(n));
          auto [p, ec] = std::from_chars(hex.data(), hex.data() + hex.size(), cp, 16);
          if (ec != std::errc() || p != hex.data() + hex.size()) fail("bad unicode escape");
          pos_ += static_cast<std::size_t>(n);
          out += text::encode_utf8(std::u32string(1, static_cast<char32_t>(cp)));
          break;
        }
        default:
          fail(std::string("unknown escape \\") + e);
      }
    }
    return out;
  }

  std::string parse_literal_string() {
    take();
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') fail("unterminated string");
      const char c = take();
      if (c == '\'') break;
      out += c;
    }
    return out;
  }

  json parse_value() {
    const char c = peek();
    if (c == '"') {
      if (peek(1) == '"' && peek(2) == '"') fail("multi-line strings are not supported");
      return parse_basic_string();
    }
    if (c == '\'') return parse_literal_string();
    if (c == '[') return parse_array();
    if (c == '{') return parse_inline_table();
    std::string tok;
    while (!eof() && (bare_key_char(peek()) || peek() == '.' || peek() == '+')) {
      tok += take();
    }
    if (tok == "true") return true;
    if (tok == "false") return false;
    if (tok.empty()) fail("expected a value");
    return parse_number(tok);
  }

  json parse_number(std::string tok) {
    std::erase(tok, '_');
    if (!tok.empty() && tok[0] == '+') tok.erase(0, 1);
    const bool is_float = tok.find_first_of(".eE") != std::string::npos ||
                          tok == "inf" || tok == "-inf" || tok == "nan";
    if (!is_float) {
      std::int64_t v = 0;
      auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec == std::errc() && p == tok.data() + tok.size()) return v;
      fail("bad value '" + tok + "'");
    }
    try {
      std::size_t used = 0;
      const double v = std::stod(tok, &used);
      if (used == tok.size()) return v;
    } catch (const std::exception&) {
    }
    fail("bad value '" + tok + "'");
  }

  json parse_array() {
    take();
    json arr = json::array();
    while (true) {
      skip_ws_nl();
      if (peek() == ']') {
        take();
        return arr;
      }
      arr.push_back(parse_value());
      skip_ws_nl();
      if (peek() == ',') {
        take();
      } else if (peek() != ']') {
        fail("expected ',' or ']' in array");
      }
    }
  }

  json parse_inline_table() {
    take();
    json tbl = json::object();
    skip_ws();
    if (peek() == '}') {
      take();
      return tbl;
    }
    while (true) {
      auto path = parse_key();
      skip_ws();
      expect('=');
      skip_ws();
      assign(tbl, path, parse_value());
      skip_ws();
      if (peek() == ',') {
        take();
        continue;
      }
      expect('}');
      return tbl;
    }
  }

  std::set<std::string> defined_;
  std::string_view s_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

}  // namespace

nlohmann::json parse_toml(std::string_view text) { return Parser(text).run(); }

nlohmann::json load_toml(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_toml(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace mteforge::config
