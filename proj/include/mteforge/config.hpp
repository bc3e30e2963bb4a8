#pragma once

#include <filesystem>
#include <string_view>

#include <nlohmann/json.hpp>

namespace mteforge::config {

// Reads the TOML subset used by pipeline configs: tables, arrays of tables,
// dotted and quoted keys, basic and literal strings, integers, floats,
// booleans, arrays (multi-line allowed) and inline tables. Dates and
// multi-line strings are not supported. Throws ConfigError with the line.
nlohmann::json parse_toml(std::string_view text);
nlohmann::json load_toml(const std::filesystem::path& path);

}  // namespace mteforge::config
