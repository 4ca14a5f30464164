#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "evolvtrip/corpus.hpp"
#include "evolvtrip/llmgate.hpp"
#include "evolvtrip/templates.hpp"
#include "evolvtrip/triples.hpp"

namespace evolvtrip {

enum class QuestionState { Generated, LlmVerified, HumanVerified, Rejected };

std::string_view to_string(QuestionState s);
QuestionState question_state_from_string(std::string_view s);

// Option texts are stored without labels; the label is the position (A-D).
struct TomQuestion {
  std::string id;
  std::string book_id;
  int plot_index = 0;
  std::string character;
  Dimension dimension = Dimension::Belief;
  std::string scenario;
  std::string reasoning;
  std::string stem;
  std::array<std::string, 4> options;
  char correct = 'A';
  QuestionState state = QuestionState::Generated;
  int attempt = 1;
  // options[i] is the option the model emitted at position permutation[i].
  std::array<int, 4> permutation = {0, 1, 2, 3};
  std::string notes;

  const std::string& correct_text() const { return options[static_cast<std::size_t>(correct - 'A')]; }
  // "A. ...\nB. ...\nC. ...\nD. ..."
  std::string render_options() const;

  nlohmann::json to_json() const;
  static TomQuestion from_json(const nlohmann::json& j);

  bool operator==(const TomQuestion&) const = default;
};

// "king_lear:3:king_lear:belief"
std::string question_id(const std::string& book_id, int plot_index, const std::string& character, Dimension d);

// Throws BadOptionCount, DuplicateOptions or AmbiguousCorrect when the
// question breaks the four-option, one-correct shape.
void check_question(const TomQuestion& q);

// Strips "A.", "A)", "(A)", "A:" style labels.
std::string strip_option_label(std::string_view option);

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

ChatRequest build_question_prompt(const Plot& plot, const std::vector<Conversation>& conversations,
                                  const std::string& character,
                                  const std::vector<MentalStateTriple>& previous_triples,
                                  const GenerationSettings& settings, const TemplateSet& templates = {});

// One question per dimension, in Belief, Desire, Emotion, Intention order.
// Throws UnparseableResponse, MissingDimension, BadOptionCount,
// AmbiguousCorrect or DuplicateOptions.
std::vector<TomQuestion> parse_question_response(std::string_view text, const std::string& book_id = {},
                                                 int plot_index = 0, const std::string& character = {});

// A response holding a single "<Dimension> Multiple Choice Question" block.
TomQuestion parse_single_question(std::string_view text, Dimension dimension);

// Seeded Fisher-Yates over the options, keyed by (seed, question id).
// Records the permutation and moves the correct letter with its option.
void shuffle_options(TomQuestion& q, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Verification
// ---------------------------------------------------------------------------

enum class VerdictStage { Llm, Human };

struct VerificationVerdict {
  std::string question_id;
  VerdictStage stage = VerdictStage::Llm;
  bool pass = false;
  std::string notes;

  nlohmann::json to_json() const;
};

// Legal moves: Generated -> {LlmVerified, Rejected},
// LlmVerified -> {HumanVerified, Rejected}, Rejected -> Generated (attempt+1).
bool transition_allowed(QuestionState from, QuestionState to);
// Throws IllegalTransition.
void transition(TomQuestion& q, QuestionState to);

ChatRequest build_verification_prompt(const TomQuestion& q, const std::string& plot_summary,
                                      const GenerationSettings& settings, const TemplateSet& templates = {});

// {"verdict": "pass"|"fail", "notes": ...}; anything unreadable is a fail.
VerificationVerdict parse_verdict(std::string_view text, const std::string& question_id);

// Requires state Generated. Pass moves to LlmVerified, fail to Rejected.
VerificationVerdict llm_verify(TomQuestion& q, Gateway& gateway, const std::string& plot_summary,
                               const GenerationSettings& settings, const TemplateSet& templates = {});

// Revision request for a rejected question. Throws IllegalTransition unless
// the question is Rejected, AttemptsExhausted once attempt >= max_attempts.
ChatRequest build_regeneration_prompt(const TomQuestion& q, const std::string& generation_prompt, int max_attempts,
                                      const GenerationSettings& settings, const TemplateSet& templates = {});

// Replacement question from a revision response: same identity, state
// Generated, attempt incremented, options reshuffled.
TomQuestion apply_regeneration(const TomQuestion& q, std::string_view response_text, std::uint64_t shuffle_seed);

// Requires state Rejected and attempt < max_attempts (else AttemptsExhausted).
// The returned question is back in Generated with attempt incremented.
TomQuestion regenerate(const TomQuestion& q, Gateway& gateway, const std::string& generation_prompt,
                       int max_attempts, const GenerationSettings& settings, std::uint64_t shuffle_seed,
                       const TemplateSet& templates = {});

// ---------------------------------------------------------------------------
// Human review round-trip
// ---------------------------------------------------------------------------

const std::vector<std::string>& review_header();

// Writes LlmVerified questions only; returns how many rows were written.
std::size_t export_review(const std::vector<TomQuestion>& questions, const std::filesystem::path& path);
std::string review_csv(const std::vector<TomQuestion>& questions);

struct ReviewRowError {
  std::size_t line = 0;
  ErrorCode code = ErrorCode::MalformedVerdictRow;
  std::string message;
};

struct ImportReport {
  std::vector<VerificationVerdict> applied;
  std::size_t pending = 0;  // rows with a blank verdict
  std::vector<ReviewRowError> errors;
};

// Applies every valid row; bad rows are reported, not fatal. A header that
// differs from review_header() throws MalformedVerdictRow.
ImportReport import_review(const std::filesystem::path& path, std::vector<TomQuestion>& questions);
ImportReport import_review_csv(std::string_view csv, std::vector<TomQuestion>& questions);

// ---------------------------------------------------------------------------
// Bookkeeping
// ---------------------------------------------------------------------------

struct DatasetStats {
  std::int64_t questions = 0;
  std::int64_t correct_answers = 0;
  std::int64_t distractors = 0;
  std::int64_t choices = 0;
  std::map<Dimension, std::int64_t> per_dimension;
  std::map<std::string, std::int64_t> per_book;
  std::int64_t verified = 0;             // LlmVerified or HumanVerified
  std::int64_t verified_first_try = 0;   // ... with attempt == 1

  // verified_first_try / questions, half-up hundredths of a percent.
  std::int64_t first_pass_percent_hundredths() const;
  std::string render() const;
  nlohmann::json to_json() const;
};

DatasetStats dataset_stats(const std::vector<TomQuestion>& questions);

// round(rate * n) distinct indices in ascending order, chosen by a seeded
// shuffle.
std::vector<std::size_t> sample_indices(std::size_t n, double rate, std::uint64_t seed);

std::string questions_to_jsonl(const std::vector<TomQuestion>& questions);
std::vector<TomQuestion> questions_from_jsonl(std::string_view data);

}  // namespace evolvtrip
