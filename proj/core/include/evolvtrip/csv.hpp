#pragma once

#include <string>
#include <string_view>
#include <vector>

// Minimal RFC 4180 reader/writer: quoted fields may contain commas, doubled
// quotes and line breaks.
namespace evolvtrip::csv {

using Row = std::vector<std::string>;

std::string escape_field(std::string_view field);
std::string format_row(const Row& row);

struct ParsedRow {
  Row fields;
  std::size_t line = 0;  // 1-based line where the record starts
};

// Throws std::runtime_error on an unterminated quoted field.
std::vector<ParsedRow> parse(std::string_view data);

}  // namespace evolvtrip::csv
