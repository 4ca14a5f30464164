#pragma once

#include <array>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "evolvtrip/corpus.hpp"
#include "evolvtrip/llmgate.hpp"
#include "evolvtrip/templates.hpp"

namespace evolvtrip {

// Report-column order: Belief, Desire, Emotion, Intention.
enum class Dimension { Belief, Desire, Emotion, Intention };

inline constexpr std::array<Dimension, 4> kAllDimensions = {Dimension::Belief, Dimension::Desire, Dimension::Emotion,
                                                            Dimension::Intention};

std::string_view to_string(Dimension d);
Dimension dimension_from_string(std::string_view s);

enum class TripleStatus { Active, Superseded, Retired };

std::string_view to_string(TripleStatus s);
TripleStatus triple_status_from_string(std::string_view s);

struct MentalStateTriple {
  std::string id;
  std::string subject;
  std::string predicate_raw;
  Dimension dimension = Dimension::Belief;
  std::optional<std::string> target;
  std::string object;
  int plot_index = 0;
  TripleStatus status = TripleStatus::Active;
  std::optional<std::string> supersedes;

  // "(subject, predicate, object)"
  std::string render() const;
  nlohmann::json to_json() const;
  static MentalStateTriple from_json(const nlohmann::json& j);

  bool operator==(const MentalStateTriple&) const = default;
};

// Triples for one character at one plot. Construct through make_batch, which
// rejects triples whose subject or plot differ from the batch.
struct TripleBatch {
  std::string character;
  int plot_index = 0;
  std::vector<MentalStateTriple> triples;
  std::string raw_response;
};

TripleBatch make_batch(std::string character, int plot_index, std::vector<MentalStateTriple> triples,
                       std::string raw_response = {});

// ---------------------------------------------------------------------------
// Predicate interpretation
// ---------------------------------------------------------------------------

// Case-insensitive stem match over Believes/Feels/Intends/Desires.
// Throws Error(UnknownPredicate) when no stem matches.
Dimension classify_dimension(std::string_view predicate_raw);
std::optional<Dimension> try_classify_dimension(std::string_view predicate_raw);

// Target named in a compound predicate: "FeelsTowardsCordelia" -> "Cordelia".
// Only particles that introduce an addressee (About, Towards, Toward, For,
// Regarding, With, Against, Of, At) yield a target; "To" introduces a verb
// ("DesiresToKnow") and yields none.
std::optional<std::string> extract_target(std::string_view predicate_raw, std::string_view object = {});

// ---------------------------------------------------------------------------
// Response parsing
// ---------------------------------------------------------------------------

struct MalformedEntry {
  std::string entry;
  std::string reason;
};

struct TripleParse {
  // Key of the response object ("Target Character" or a character name).
  std::string key;
  std::vector<MentalStateTriple> triples;
  std::vector<MalformedEntry> malformed;       // fewer than two separators
  std::vector<MalformedEntry> unknown_predicate;  // quarantined, never dropped
};

// Total over text except when nothing triple-shaped can be recovered, which
// throws Error(UnparseableResponse). Each entry "(S, P, O)" is split on its
// first two top-level commas; the rest belongs to the object.
TripleParse parse_triple_response(std::string_view text, int plot_index = 0);

// Split one "(S, P, O)" entry. nullopt when it lacks two separators.
std::optional<std::array<std::string, 3>> split_triple_entry(std::string_view entry);

// Build a triple from its three parts (dimension and target derived).
MentalStateTriple make_triple(std::string subject, std::string predicate, std::string object, int plot_index);

// Canonical serialization of a batch, one "(S, P, O)" per line inside the
// response JSON shape the extraction prompt asks for.
std::string render_batch_response(const std::vector<MentalStateTriple>& triples);

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

enum class Violation { PronounInObject, SubjectMismatch, UnknownTarget, DimensionMismatch };

std::string_view to_string(Violation v);

// Whole-token third-person pronoun test (he, she, his, her, him, they,
// them, their).
bool contains_pronoun(std::string_view object);

std::vector<Violation> validate_triple(const MentalStateTriple& triple, std::string_view character,
                                       const std::set<std::string>& visible_cast,
                                       const CharacterRegistry* registry = nullptr);

// Cast visible to `character` in a plot: everyone speaking in the
// conversations the character takes part in.
std::set<std::string> visible_cast(const Plot& plot, std::string_view character);

// ---------------------------------------------------------------------------
// Prompting
// ---------------------------------------------------------------------------

struct GenerationSettings {
  std::string model_id = "gpt-4o";
  double temperature = 0.0;
  int max_output_tokens = 2048;
  std::optional<std::int64_t> seed = 0;

  nlohmann::json to_json() const;
  // Keys model_id, temperature, max_output_tokens, seed; unknown keys rejected.
  // Missing keys keep the values of `defaults`.
  static GenerationSettings from_json(const nlohmann::json& j, GenerationSettings defaults);
  static GenerationSettings from_json(const nlohmann::json& j) { return from_json(j, GenerationSettings()); }
};

// Dialogue block: "Environment: ..." line then one "Speaker: utterance" per turn.
std::string render_dialogues(const std::vector<Conversation>& conversations);

// Previous triples, one "(S, P, O)" per line in plot order.
std::string render_previous_triples(const std::vector<MentalStateTriple>& triples);

// Throws Error(CharacterAbsent) unless `character` speaks in `conversations`.
ChatRequest build_extraction_prompt(const Plot& plot, const std::vector<Conversation>& conversations,
                                    const std::string& character,
                                    const std::vector<MentalStateTriple>& previous_triples,
                                    const GenerationSettings& settings, const TemplateSet& templates = {});

}  // namespace evolvtrip
