#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "config.hpp"
#include "evolvtrip/evalharness.hpp"
#include "evolvtrip/llmgate.hpp"
#include "evolvtrip/qagen.hpp"
#include "evolvtrip/templates.hpp"
#include "evolvtrip/tkg.hpp"

namespace evolvtrip::pipeline {

// Command-line overrides shared by every subcommand.
struct GlobalFlags {
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::filesystem::path> replay;
  std::optional<std::filesystem::path> cache_dir;
  std::optional<std::string> backend;
};

struct EvalFlags {
  std::vector<std::string> models;
  std::vector<std::string> conditions;
  std::optional<std::string> context;  // current|extended|both
  std::optional<std::string> triples;  // on|off|both
  std::optional<std::string> layout;
};

// 0 success, 1 user/config/data error, 2 backend or upstream failure.
int exit_code_for(ErrorCode code);

class Pipeline {
 public:
  // Results (reports, stats) go to `out`; progress and warnings to `log`.
  Pipeline(PipelineConfig config, GlobalFlags flags, std::ostream& out, std::ostream& log);
  ~Pipeline();

  const std::filesystem::path& out_dir() const { return out_; }

  int ingest();
  int extract();
  int build_kg();
  int genqa();
  int verify();
  int review_export();
  int review_import(const std::filesystem::path& file);
  int eval(const EvalFlags& flags);
  int report(const std::optional<std::string>& layout);
  int emit_ft();
  int stats(const std::optional<std::filesystem::path>& source);

 private:
  class Run;

  Corpus load_corpus(Run& run) const;
  std::map<std::string, CharacterRegistry> load_aliases() const;
  CharacterRegistry registry_for(const Book& book) const;
  std::vector<std::string> characters_for(const Book& book) const;
  std::map<std::string, TemporalKG> load_kgs(const Corpus& corpus, Run& run) const;
  std::vector<TomQuestion> load_questions(Run& run) const;
  void save_questions(const std::vector<TomQuestion>& questions, Run& run) const;
  ChatRequest generation_prompt(const Book& book, const Plot& plot, const std::string& character,
                                const TemporalKG* kg) const;
  Gateway& gateway();
  std::filesystem::path path(const std::string& rel) const { return out_ / rel; }

  PipelineConfig config_;
  GlobalFlags flags_;
  std::ostream& out_stream_;
  std::ostream& log_;
  std::filesystem::path out_;
  TemplateSet templates_;
  BackendConfig backend_;
  std::unique_ptr<Gateway> gateway_;
};

}  // namespace evolvtrip::pipeline
