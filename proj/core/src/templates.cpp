#include "evolvtrip/templates.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "evolvtrip/error.hpp"
#include "evolvtrip/hashing.hpp"

namespace evolvtrip {

namespace detail {
const std::map<std::string, std::string>& embedded_templates();
}

namespace {

struct Placeholder {
  std::size_t begin;
  std::size_t end;  // one past the closing braces
  std::string name;
};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::vector<Placeholder> scan(const std::string& body) {
  std::vector<Placeholder> out;
  std::size_t pos = 0;
  while ((pos = body.find("{{", pos)) != std::string::npos) {
    std::size_t i = pos + 2;
    if (i < body.size() && ident_start(body[i])) {
      std::size_t j = i;
      while (j < body.size() && ident_char(body[j])) ++j;
      if (body.compare(j, 2, "}}") == 0) {
        out.push_back({pos, j + 2, body.substr(i, j - i)});
        pos = j + 2;
        continue;
      }
    }
    ++pos;
  }
  return out;
}

}  // namespace

PromptTemplate::PromptTemplate(std::string name, std::string body)
    : name_(std::move(name)), body_(std::move(body)) {}

PromptTemplate PromptTemplate::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::TemplateError, "cannot read template " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return PromptTemplate(path.stem().string(), buf.str());
}

PromptTemplate PromptTemplate::builtin(const std::string& name) {
  const auto& table = detail::embedded_templates();
  auto it = table.find(name);
  if (it == table.end()) throw Error(ErrorCode::TemplateError, "no builtin template named " + name);
  return PromptTemplate(name, it->second);
}

std::vector<std::string> PromptTemplate::placeholders() const {
  std::vector<std::string> names;
  std::set<std::string> seen;
  for (const auto& p : scan(body_)) {
    if (seen.insert(p.name).second) names.push_back(p.name);
  }
  return names;
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& values) const {
  std::string out;
  out.reserve(body_.size());
  std::size_t cursor = 0;
  for (const auto& p : scan(body_)) {
    auto it = values.find(p.name);
    if (it == values.end()) {
      throw Error(ErrorCode::TemplateError, "template '" + name_ + "' needs a value for {{" + p.name + "}}");
    }
    out.append(body_, cursor, p.begin - cursor);
    out.append(it->second);
    cursor = p.end;
  }
  out.append(body_, cursor, std::string::npos);
  return out;
}

TemplateSet::TemplateSet() {
  for (const auto& [name, body] : detail::embedded_templates()) {
    templates_.emplace(name, PromptTemplate(name, body));
  }
}

void TemplateSet::override_with(const std::string& name, const std::filesystem::path& path) {
  if (!templates_.count(name)) throw Error(ErrorCode::TemplateError, "unknown template name " + name);
  templates_[name] = PromptTemplate(name, PromptTemplate::from_file(path).body());
}

const PromptTemplate& TemplateSet::get(const std::string& name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) throw Error(ErrorCode::TemplateError, "unknown template name " + name);
  return it->second;
}

std::string TemplateSet::version_digest() const {
  std::string all;
  for (const auto& name : builtin_template_names()) {
    all += name;
    all += '\0';
    all += get(name).body();
    all += '\0';
  }
  return sha256_hex(all);
}

std::vector<std::string> builtin_template_names() {
  std::vector<std::string> names;
  for (const auto& [name, body] : detail::embedded_templates()) names.push_back(name);
  return names;
}

}  // namespace evolvtrip
