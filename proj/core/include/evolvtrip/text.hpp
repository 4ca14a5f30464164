#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace evolvtrip::text {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

// Lowercase, trim, and collapse internal whitespace runs to one space.
std::string normalize(std::string_view s);

// Remove every whitespace character.
std::string strip_whitespace(std::string_view s);

bool starts_with_ci(std::string_view s, std::string_view prefix);
bool iequals(std::string_view a, std::string_view b);

std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Lowercased alphanumeric word tokens (apostrophes inside words are kept).
std::vector<std::string> word_tokens(std::string_view s);

// Filesystem-safe identifier: lowercase ASCII alnum and '_' only.
std::string slugify(std::string_view s);

// "KingLear" -> "King Lear"; leaves already spaced text untouched.
std::string split_camel_case(std::string_view s);

// Remove a surrounding ``` fence (with optional language tag) if present.
std::string strip_code_fence(std::string_view s);

// Percentage of numerator/denominator rounded half-up to hundredths and
// returned as an integer count of hundredths. Denominator must be positive.
std::int64_t percent_hundredths(std::int64_t numerator, std::int64_t denominator);

// Ratio numerator/denominator rounded half-up to hundredths.
std::int64_t ratio_hundredths(std::int64_t numerator, std::int64_t denominator);

// 6952 -> "69.52"
std::string format_hundredths(std::int64_t hundredths);

}  // namespace evolvtrip::text
