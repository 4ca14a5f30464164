#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace evolvtrip {

// A prompt template with `{{name}}` placeholders. Only identifier-shaped
// names ([A-Za-z_][A-Za-z0-9_]*) are placeholders, so literal JSON braces in
// output-format sections pass through untouched.
class PromptTemplate {
 public:
  PromptTemplate() = default;
  PromptTemplate(std::string name, std::string body);

  static PromptTemplate from_file(const std::filesystem::path& path);
  // One of the templates compiled into the library (see core/assets/prompts).
  static PromptTemplate builtin(const std::string& name);

  const std::string& name() const { return name_; }
  const std::string& body() const { return body_; }
  std::vector<std::string> placeholders() const;

  // Throws Error(TemplateError) if any placeholder has no value.
  std::string render(const std::map<std::string, std::string>& values) const;

 private:
  std::string name_;
  std::string body_;
};

// Named template set with optional per-name file overrides.
class TemplateSet {
 public:
  TemplateSet();

  void override_with(const std::string& name, const std::filesystem::path& path);
  const PromptTemplate& get(const std::string& name) const;
  std::string version_digest() const;

 private:
  std::map<std::string, PromptTemplate> templates_;
};

std::vector<std::string> builtin_template_names();

}  // namespace evolvtrip
