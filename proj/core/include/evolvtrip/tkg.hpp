#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "evolvtrip/triples.hpp"

namespace evolvtrip {

struct CharacterNode {
  std::string name;
  std::set<int> plots_seen;
  int last_batch_plot = 0;  // latest plot a batch was inserted for

  bool operator==(const CharacterNode&) const = default;
};

enum class SupersedeReason { Refined, Contradicted };

std::string_view to_string(SupersedeReason r);
SupersedeReason supersede_reason_from_string(std::string_view s);

struct SupersedeLink {
  std::string old_id;
  std::string new_id;
  SupersedeReason reason = SupersedeReason::Refined;

  bool operator==(const SupersedeLink&) const = default;
};

// A prior triple the LLM dropped from its updated state. It stops being part
// of the character's state from `plot_index` on.
struct Retirement {
  std::string triple_id;
  int plot_index = 0;

  bool operator==(const Retirement&) const = default;
};

enum class MergeMode { TrustLlmDiff, DeterministicMerge };

std::string_view to_string(MergeMode m);
MergeMode merge_mode_from_string(std::string_view s);

struct MergeConfig {
  MergeMode mode = MergeMode::TrustLlmDiff;
  double jaccard_threshold = 0.5;
  // Polarity cues: an object pair whose cue counts differ in parity is read
  // as a contradiction.
  std::vector<std::string> negation_cues = {"not", "no", "never", "n't", "nothing", "nobody", "neither", "nor",
                                            "cannot"};
  std::vector<std::pair<std::string, std::string>> antonym_pairs;

  nlohmann::json to_json() const;
  static MergeConfig from_json(const nlohmann::json& j);
};

enum class ChangeKind { Added, Unchanged, Refined, Contradicted, Retired, Duplicate };

std::string_view to_string(ChangeKind k);

struct Change {
  ChangeKind kind = ChangeKind::Added;
  std::string triple_id;  // the edge added, kept or retired
  std::string other_id;   // superseded edge for Refined/Contradicted, matched edge for Unchanged/Duplicate
};

struct ChangeLog {
  std::string character;
  int plot_index = 0;
  std::vector<Change> changes;

  std::size_t count(ChangeKind k) const;
};

struct TimelineRecord {
  int plot_index = 0;
  MentalStateTriple triple;
  std::optional<SupersedeLink> replaces;     // link this triple created
  std::optional<SupersedeLink> replaced_by;  // link that superseded it
  std::optional<int> retired_at;
};

// Jaccard similarity of lowercased content tokens (stopwords removed).
double object_similarity(std::string_view a, std::string_view b);

// Heuristic contradiction test between two objects about the same target.
bool objects_contradict(std::string_view older, std::string_view newer, const MergeConfig& config);

// Per-book temporal knowledge graph. Single writer; take a snapshot() to hand
// an immutable view to concurrent readers.
class TemporalKG {
 public:
  TemporalKG() = default;
  TemporalKG(std::string book_id, int plot_count);

  const std::string& book_id() const { return book_id_; }
  int plot_count() const { return plot_count_; }

  void register_character(const std::string& name);
  bool has_character(const std::string& name) const;
  const std::map<std::string, CharacterNode>& nodes() const { return nodes_; }

  // Edges in insertion order; ids are "e1", "e2", ...
  const std::vector<MentalStateTriple>& edges() const { return edges_; }
  const MentalStateTriple* find_edge(const std::string& id) const;
  const std::vector<SupersedeLink>& links() const { return links_; }
  const std::vector<Retirement>& retirements() const { return retirements_; }

  // Throws NonMonotoneInsert, ForeignSubject or PlotOutOfRange; the graph is
  // unchanged when it throws.
  ChangeLog insert_batch(const TripleBatch& batch, const MergeConfig& config = {});

  // State of `character` after plot t, ordered by (plot, insertion).
  std::vector<MentalStateTriple> state_at(const std::string& character, int plot_t) const;
  std::vector<TimelineRecord> timeline(const std::string& character,
                                       std::optional<Dimension> dimension = std::nullopt) const;

  // Invariant violations (empty when healthy): link monotonicity, acyclicity,
  // plots_seen consistency, registered subjects, plot range.
  std::vector<std::string> check_invariants() const;

  std::shared_ptr<const TemporalKG> snapshot() const { return std::make_shared<const TemporalKG>(*this); }

  bool operator==(const TemporalKG&) const = default;

 private:
  friend TemporalKG load_kg_from_string(std::string_view data);

  std::string next_id();
  void check_plot(int plot) const;

  std::string book_id_;
  int plot_count_ = 0;
  std::map<std::string, CharacterNode> nodes_;
  std::vector<MentalStateTriple> edges_;
  std::map<std::string, std::size_t> edge_index_;
  std::vector<SupersedeLink> links_;
  std::vector<Retirement> retirements_;
  int next_edge_ = 1;
};

// JSONL: a header line {type: "header", book_id, plot_count, counts, hash}
// followed by node, edge, link and retire lines. The hash is SHA-256 over the
// body lines joined by '\n'.
std::string save_kg_to_string(const TemporalKG& kg);
TemporalKG load_kg_from_string(std::string_view data);
void save_kg(const TemporalKG& kg, const std::filesystem::path& path);
TemporalKG load_kg(const std::filesystem::path& path);

// Tab-separated edge list: subject, predicate, target-or-object, plot, status.
std::string export_edge_list(const TemporalKG& kg);

}  // namespace evolvtrip
