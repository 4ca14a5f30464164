#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace evolvtrip {

// ---------------------------------------------------------------------------
// Narrative corpus: books split into numbered plots, each plot carrying
// conversations whose turns are segmented into speech, action and thought.
// ---------------------------------------------------------------------------

enum class SegmentKind { Speech, Action, Thought };

std::string_view to_string(SegmentKind kind);
SegmentKind segment_kind_from_string(std::string_view s);

struct UtteranceSegment {
  SegmentKind kind = SegmentKind::Speech;
  std::string text;  // delimiters stripped

  bool operator==(const UtteranceSegment&) const = default;
};

struct Turn {
  std::string speaker;
  std::vector<UtteranceSegment> segments;

  // Utterance re-rendered with its delimiters: (action) [thought] speech.
  std::string utterance() const;
  bool operator==(const Turn&) const = default;
};

struct ParsedTurn {
  Turn turn;
  std::vector<std::string> warnings;
};

// Splits "Speaker: utterance" into a Turn. Parenthesized spans become Action,
// bracketed spans Thought, everything else Speech, in source order.
// Nested or unbalanced delimiters degrade to Speech with a warning.
// Throws Error(NoSpeaker) when the line has no "Name:" prefix.
ParsedTurn parse_turn(std::string_view line);

// Segment a bare utterance (no speaker prefix).
std::vector<UtteranceSegment> segment_utterance(std::string_view utterance,
                                                std::vector<std::string>* warnings = nullptr);

struct Conversation {
  std::string book_id;
  int plot_index = 0;
  std::string environment;
  std::vector<Turn> turns;

  // Distinct speakers in first-appearance order.
  std::vector<std::string> cast() const;
  bool operator==(const Conversation&) const = default;
};

struct Plot {
  std::string book_id;
  int index = 0;  // 1-based narrative order
  std::string summary;
  std::string scenario;
  std::vector<Conversation> conversations;

  std::vector<std::string> speakers() const;
  bool has_speaker(std::string_view name) const;
  bool operator==(const Plot&) const = default;
};

struct Book {
  std::string id;
  std::string title;
  std::vector<Plot> plots;

  const Plot* find_plot(int index) const;
  bool operator==(const Book&) const = default;
};

class CharacterRegistry;

struct Corpus {
  std::vector<Book> books;
  std::vector<std::string> warnings;

  const Book* find_book(std::string_view id_or_title) const;
  const Plot* find_plot(std::string_view book_id, int index) const;
  bool operator==(const Corpus& other) const { return books == other.books; }
};

// Checks the plot invariants of a book (1..N contiguous, non-empty summary
// and scenario, at least one turn per conversation). Throws on violation.
void validate_book(const Book& book);

// ---------------------------------------------------------------------------
// Character identity
// ---------------------------------------------------------------------------

// Per-book alias table. Alias sets of distinct canonical names stay disjoint:
// an alias claimed by two canonical names is moved to an ambiguity list and
// resolving it reports AmbiguousAlias instead of picking one.
class CharacterRegistry {
 public:
  CharacterRegistry() = default;

  void add_canonical(const std::string& canonical);
  void add_alias(const std::string& canonical, const std::string& alias);

  // Canonical name for `name` (case-insensitive, whitespace-normalized).
  // Unknown names are registered as new canonical entries.
  std::string resolve(std::string_view name);
  // Same lookup without registering; nullopt for unknown names.
  std::optional<std::string> lookup(std::string_view name) const;

  bool contains(std::string_view name) const;
  std::vector<std::string> canonical_names() const;
  const std::set<std::string>& aliases_of(const std::string& canonical) const;

 private:
  std::map<std::string, std::set<std::string>> aliases_;            // canonical -> aliases
  std::map<std::string, std::string> index_;                        // normalized alias -> canonical
  std::map<std::string, std::set<std::string>> ambiguous_;          // normalized alias -> canonicals
};

// Alias table file, keyed by book:
//
//   book: king_lear
//   King Lear = Lear, the King
//   King of France = France, the King
//
// Blank lines and '#' comments are ignored.
std::map<std::string, CharacterRegistry> load_alias_table(const std::filesystem::path& path);
std::map<std::string, CharacterRegistry> parse_alias_table(std::string_view text);

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

enum class CorpusFormat {
  CoserJson,        // one JSON document per book, field names via SourceAdapter
  NormalizedJsonl,  // one JSONL file per book, one plot per line
};

CorpusFormat corpus_format_from_string(std::string_view s);
std::string_view to_string(CorpusFormat format);

// Field names used to read a source book document.
struct SourceAdapter {
  std::string title = "book";
  std::string title_fallback = "title";
  std::string plots = "plots";
  std::string summary = "summary";
  std::string plot_scenario = "scenario";
  std::string conversations = "conversation";
  std::string conversation_scenario = "scenario";
  std::string environment = "environment";
  std::string dialogues = "dialogues";
  std::string speaker = "character";
  std::string message = "message";
  std::string environment_speaker = "Environment";

  static SourceAdapter coser();
  static SourceAdapter from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct IngestOptions {
  CorpusFormat format = CorpusFormat::CoserJson;
  SourceAdapter adapter = SourceAdapter::coser();
  // Restrict to these book ids or titles (empty = all).
  std::vector<std::string> only_books;
  // Speaker names are mapped through the registry for their book when present.
  const std::map<std::string, CharacterRegistry>* aliases = nullptr;
  unsigned threads = 1;
};

// `path` may be a single file or a directory of files. Throws UnreadableSource,
// MalformedRecord or DuplicatePlotIndex.
Corpus ingest_corpus(const std::filesystem::path& path, const IngestOptions& options = {});

// Parse one source book document.
Book book_from_source(const nlohmann::json& doc, const std::string& book_id,
                      const SourceAdapter& adapter, std::vector<std::string>* warnings = nullptr);

// Normalized JSONL: one line per plot.
nlohmann::json plot_to_json(const Plot& plot, const std::string& book_title);
std::string book_to_jsonl(const Book& book);
Book book_from_jsonl(std::string_view data, const std::string& fallback_id);
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

struct CountStats {
  std::int64_t plots = 0;
  std::int64_t conversations = 0;
  std::int64_t speaker_slots = 0;  // sum over conversations of distinct speakers

  // Mean distinct speakers per conversation, half-up to hundredths.
  // Undefined (reported as 0.00) when there are no conversations.
  bool mean_defined() const { return conversations > 0; }
  std::int64_t avg_speakers_hundredths() const;
  std::int64_t conversations_per_plot_hundredths() const;
};

struct BookStats {
  std::string book_id;
  std::string title;
  CountStats counts;
};

struct StatsReport {
  std::vector<BookStats> books;
  CountStats total;

  std::string render() const;
  nlohmann::json to_json() const;
};

StatsReport corpus_stats(const Corpus& corpus,
                         const std::map<std::string, CharacterRegistry>* aliases = nullptr);

}  // namespace evolvtrip
