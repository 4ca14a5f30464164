#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "evolvtrip/corpus.hpp"
#include "evolvtrip/evalharness.hpp"
#include "evolvtrip/llmgate.hpp"
#include "evolvtrip/tkg.hpp"
#include "evolvtrip/triples.hpp"

namespace evolvtrip::pipeline {

enum class TripleToggle { Off, On, Both };

TripleToggle triple_toggle_from_string(std::string_view s);

// Replaces ${NAME} with the environment variable's value; an unset variable
// is a config error.
std::string interpolate_env(std::string_view s);

struct PipelineConfig {
  std::filesystem::path base_dir;  // relative paths resolve against this
  std::string source_sha256;       // of the config file bytes

  std::optional<std::uint64_t> seed;

  struct CorpusSection {
    std::filesystem::path path;
    CorpusFormat format = CorpusFormat::CoserJson;
    SourceAdapter adapter;
    std::optional<std::filesystem::path> aliases;
    std::vector<std::string> books;
    unsigned threads = 1;
  } corpus;

  std::filesystem::path output_dir = "out";

  std::string backend = "replay";
  std::map<std::string, BackendConfig> backends;
  std::optional<std::filesystem::path> cache_dir;

  std::map<std::string, std::filesystem::path> templates;

  // Characters to extract and question (empty = every speaker).
  std::vector<std::string> characters;

  struct ExtractionSection {
    GenerationSettings model;
    bool strict_perspective = false;
  } extraction;

  MergeConfig merge;

  struct GenerationSection {
    GenerationSettings model;
    bool shuffle_options = true;
    int max_attempts = 3;
  } generation;

  struct VerificationSection {
    GenerationSettings model;
    double question_sample_rate = 1.0;
    double triple_sample_rate = 0.4;
  } verification;

  struct EvalSection {
    std::vector<GenerationSettings> models;
    std::vector<EvalCondition> conditions = all_conditions();
    PromptVariant variant = PromptVariant::Guided;
    std::optional<int> summary_window;
    std::set<QuestionState> question_states = {QuestionState::Generated, QuestionState::LlmVerified,
                                               QuestionState::HumanVerified};
    ReportLayout layout = ReportLayout::Plain;
  } eval;

  struct FinetuneSection {
    std::set<std::string> ood_books;
    ContextMode context = ContextMode::CurrentPlot;
    bool waive_verification = false;
    TripleToggle with_triples = TripleToggle::Both;
  } finetune;

  // Throws ConfigInvalid (unknown keys, bad values, missing seed when
  // something is sampled or shuffled).
  static PipelineConfig load(const std::filesystem::path& path);
  static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

  void validate() const;
  std::filesystem::path resolve(const std::filesystem::path& p) const;
  const BackendConfig& active_backend() const;
};

}  // namespace evolvtrip::pipeline
