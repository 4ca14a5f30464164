#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "evolvtrip/corpus.hpp"
#include "evolvtrip/llmgate.hpp"
#include "evolvtrip/qagen.hpp"
#include "evolvtrip/templates.hpp"
#include "evolvtrip/tkg.hpp"

namespace evolvtrip {

enum class ContextMode { CurrentPlot, CurrentPlusPrevSummaries };

std::string_view to_string(ContextMode m);
// "current" / "extended" (long names accepted too).
ContextMode context_mode_from_string(std::string_view s);

struct EvalCondition {
  ContextMode context = ContextMode::CurrentPlot;
  bool triples = false;

  // "current", "current+triples", "extended", "extended+triples"
  std::string label() const;
  static EvalCondition from_label(std::string_view label);
  auto operator<=>(const EvalCondition&) const = default;
};

// The 2x2 grid in report order.
std::vector<EvalCondition> all_conditions();

enum class PromptVariant { Guided, Direct };

PromptVariant prompt_variant_from_string(std::string_view s);
std::string_view to_string(PromptVariant v);

struct ContextOptions {
  PromptVariant variant = PromptVariant::Guided;
  // Extended context keeps only the last N previous summaries when set.
  std::optional<int> summary_window;
};

struct EvalPrompt {
  std::string question_id;
  EvalCondition condition;
  std::string text;
  std::int64_t token_estimate = 0;
};

// Knowledge graphs by book id.
using KgIndex = std::map<std::string, const TemporalKG*>;

// Throws MissingPlot when the question's plot is absent, MissingKg when
// triples are requested and the book has no graph.
EvalPrompt assemble_context(const TomQuestion& q, const Corpus& corpus, const KgIndex& kgs,
                            const EvalCondition& condition, const ContextOptions& options = {},
                            const TemplateSet& templates = {});

// "Relevant mental state triples:\n(S, P, O)\n...\n"
std::string render_triple_block(const std::vector<MentalStateTriple>& triples);

// First {answer: X} match (quotes, spacing and case tolerated), else a lone
// option letter on its own line, else nullopt (unparseable).
std::optional<char> parse_answer(std::string_view text);

struct Prediction {
  std::string question_id;
  std::string model_id;
  EvalCondition condition;
  std::optional<char> letter;
  std::string raw_text;
  std::int64_t prompt_tokens = 0;
  std::string error;

  nlohmann::json to_json() const;
  static Prediction from_json(const nlohmann::json& j);
};

struct ScoreCell {
  std::int64_t correct = 0;
  std::int64_t total = 0;

  std::int64_t percent_hundredths() const;  // 0 when empty
};

struct ScoreRow {
  std::string model_id;
  EvalCondition condition;
  std::map<Dimension, ScoreCell> cells;
  std::int64_t unparseable = 0;

  // Pooled over dimensions, i.e. the count-weighted mean.
  ScoreCell average() const;
};

struct ScoreTable {
  std::vector<ScoreRow> rows;

  const ScoreRow* find(const std::string& model_id, const EvalCondition& c) const;
  nlohmann::json to_json() const;
  static ScoreTable from_json(const nlohmann::json& j);
};

// Rows ordered by first appearance of the model, then condition order.
// Throws UnknownQuestionId for predictions outside the key.
ScoreTable score(const std::vector<Prediction>& predictions, const std::map<std::string, TomQuestion>& key);

enum class ReportLayout { Plain, Markdown, Csv };

ReportLayout report_layout_from_string(std::string_view s);

std::string render_report(const ScoreTable& table, ReportLayout layout);

struct EvalRun {
  std::vector<Prediction> predictions;
  ScoreTable table;
  std::vector<std::string> errors;
};

// Items run in (book, plot, question id, model, condition) order through the
// gateway; failures become unparseable predictions and are listed in errors.
EvalRun run_eval(const Corpus& corpus, const KgIndex& kgs, const std::vector<TomQuestion>& questions,
                 const std::vector<GenerationSettings>& models, const std::vector<EvalCondition>& conditions,
                 Gateway& gateway, const ContextOptions& options = {}, const TemplateSet& templates = {});

std::string predictions_to_jsonl(const std::vector<Prediction>& predictions);
std::vector<Prediction> predictions_from_jsonl(std::string_view data);

}  // namespace evolvtrip
