#include "evolvtrip/csv.hpp"

#include <stdexcept>

namespace evolvtrip::csv {

std::string escape_field(std::string_view field) {
  bool needs_quotes = field.find_first_of(",\"\r\n") != std::string_view::npos;
  if (!needs_quotes) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string format_row(const Row& row) {
  std::string out;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out.push_back(',');
    out += escape_field(row[i]);
  }
  out += "\r\n";
  return out;
}

std::vector<ParsedRow> parse(std::string_view data) {
  std::vector<ParsedRow> rows;
  ParsedRow current;
  std::string field;
  bool in_quotes = false;
  bool row_has_content = false;
  std::size_t line = 1;
  current.line = 1;

  auto end_row = [&] {
    current.fields.push_back(std::move(field));
    field.clear();
    if (row_has_content || current.fields.size() > 1 || !current.fields.front().empty()) {
      rows.push_back(std::move(current));
    }
    current = ParsedRow{};
    current.line = line;
    row_has_content = false;
  };

  for (std::size_t i = 0; i < data.size(); ++i) {
    char c = data[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < data.size() && data[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        row_has_content = true;
        break;
      case ',':
        current.fields.push_back(std::move(field));
        field.clear();
        row_has_content = true;
        break;
      case '\r':
        break;
      case '\n':
        ++line;
        end_row();
        break;
      default:
        field.push_back(c);
        row_has_content = true;
    }
  }
  if (in_quotes) throw std::runtime_error("csv: unterminated quoted field starting on line " +
                                          std::to_string(current.line));
  if (row_has_content || !field.empty()) end_row();
  return rows;
}

}  // namespace evolvtrip::csv
