#include "evolvtrip/text.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace evolvtrip::text {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

}  // namespace

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), lower);
  return out;
}

std::string normalize(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(lower(c));
  }
  return out;
}

std::string strip_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (!is_space(c)) out.push_back(c);
  }
  return out;
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (prefix.size() > s.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (lower(s[i]) != lower(prefix[i])) return false;
  }
  return true;
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && starts_with_ci(a, b);
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      break;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.append(sep);
    out.append(parts[i]);
  }
  return out;
}

std::vector<std::string> word_tokens(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    while (!cur.empty() && cur.back() == '\'') cur.pop_back();
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (is_alnum(c)) {
      cur.push_back(lower(c));
    } else if (c == '\'' && !cur.empty() && i + 1 < s.size() && is_alnum(s[i + 1])) {
      cur.push_back(c);
    } else {
      flush();
    }
  }
  flush();
  return out;
}

std::string slugify(std::string_view s) {
  std::string out;
  bool underscore = false;
  for (char c : s) {
    if (is_alnum(c) && static_cast<unsigned char>(c) < 0x80) {
      out.push_back(lower(c));
      underscore = false;
    } else if (!out.empty() && !underscore) {
      out.push_back('_');
      underscore = true;
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out.empty() ? std::string("untitled") : out;
}

std::string split_camel_case(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    bool upper = std::isupper(static_cast<unsigned char>(c)) != 0;
    if (upper && i > 0 && std::islower(static_cast<unsigned char>(s[i - 1]))) {
      out.push_back(' ');
    }
    out.push_back(c);
  }
  return out;
}

std::string strip_code_fence(std::string_view s) {
  std::string body = trim(s);
  if (body.rfind("```", 0) != 0) return body;
  auto first_nl = body.find('\n');
  if (first_nl == std::string::npos) return body;
  auto closing = body.rfind("```");
  if (closing == std::string::npos || closing <= first_nl) {
    return trim(std::string_view(body).substr(first_nl + 1));
  }
  return trim(std::string_view(body).substr(first_nl + 1, closing - first_nl - 1));
}

std::int64_t ratio_hundredths(std::int64_t numerator, std::int64_t denominator) {
  if (denominator <= 0) throw std::invalid_argument("ratio_hundredths: denominator must be positive");
  // floor(100 * n / d + 1/2) computed exactly in integers
  return (200 * numerator + denominator) / (2 * denominator);
}

std::int64_t percent_hundredths(std::int64_t numerator, std::int64_t denominator) {
  return ratio_hundredths(100 * numerator, denominator);
}

std::string format_hundredths(std::int64_t hundredths) {
  bool negative = hundredths < 0;
  std::int64_t v = negative ? -hundredths : hundredths;
  std::string frac = std::to_string(v % 100);
  if (frac.size() < 2) frac.insert(frac.begin(), '0');
  return (negative ? "-" : "") + std::to_string(v / 100) + "." + frac;
}

}  // namespace evolvtrip::text
