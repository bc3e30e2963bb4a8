#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mteforge::text {

// Decodes UTF-8 into Unicode scalar values. Invalid sequences decode to
// U+FFFD one byte at a time, so every input has a well-defined length.
std::u32string decode_utf8(std::string_view s);
std::string encode_utf8(std::u32string_view s);

// Length in scalar values; span offsets are measured in these units.
std::size_t scalar_length(std::string_view s);

// Scalar-value substring [begin, end) of a UTF-8 string.
std::string substr_scalars(std::string_view s, std::size_t begin,
                           std::size_t end);

bool is_space(char32_t c);
bool is_punct(char32_t c);

std::vector<std::string> split_whitespace(std::string_view s);

std::string to_lower_ascii(std::string_view s);

}  // namespace mteforge::text
