#include "evolvtrip/tkg.hpp"

#include <algorithm>

#include "evolvtrip/error.hpp"
#include "evolvtrip/text.hpp"

using nlohmann::json;

namespace evolvtrip {

std::string_view to_string(SupersedeReason r) {
  return r == SupersedeReason::Refined ? "refined" : "contradicted";
}

SupersedeReason supersede_reason_from_string(std::string_view s) {
  if (text::iequals(s, "refined")) return SupersedeReason::Refined;
  if (text::iequals(s, "contradicted")) return SupersedeReason::Contradicted;
  throw Error(ErrorCode::CorruptGraphFile, "unknown supersede reason '" + std::string(s) + "'");
}

std::string_view to_string(MergeMode m) {
  return m == MergeMode::TrustLlmDiff ? "trust-llm-diff" : "deterministic-merge";
}

MergeMode merge_mode_from_string(std::string_view s) {
  if (text::iequals(s, "trust-llm-diff")) return MergeMode::TrustLlmDiff;
  if (text::iequals(s, "deterministic-merge")) return MergeMode::DeterministicMerge;
  throw Error(ErrorCode::ConfigInvalid, "unknown merge mode '" + std::string(s) + "'");
}

json MergeConfig::to_json() const {
  json pairs = json::array();
  for (const auto& [a, b] : antonym_pairs) pairs.push_back(json::array({a, b}));
  return json{{"mode", to_string(mode)},
              {"jaccard_threshold", jaccard_threshold},
              {"negation_cues", negation_cues},
              {"antonym_pairs", std::move(pairs)}};
}

MergeConfig MergeConfig::from_json(const json& j) {
  MergeConfig c;
  if (!j.is_object()) throw Error(ErrorCode::ConfigInvalid, "merge config must be an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "mode") {
        c.mode = merge_mode_from_string(value.get<std::string>());
      } else if (key == "jaccard_threshold") {
        c.jaccard_threshold = value.get<double>();
      } else if (key == "negation_cues") {
        c.negation_cues = value.get<std::vector<std::string>>();
      } else if (key == "antonym_pairs") {
        c.antonym_pairs.clear();
        for (const auto& p : value) c.antonym_pairs.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
      } else {
        throw Error(ErrorCode::ConfigInvalid, "unknown merge key '" + key + "'");
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ConfigInvalid, "merge." + key + ": " + e.what());
    }
  }
  if (c.jaccard_threshold < 0.0 || c.jaccard_threshold > 1.0) {
    throw Error(ErrorCode::ConfigInvalid, "merge.jaccard_threshold must lie in [0, 1]");
  }
  return c;
}

std::string_view to_string(ChangeKind k) {
  switch (k) {
    case ChangeKind::Added: return "added";
    case ChangeKind::Unchanged: return "unchanged";
    case ChangeKind::Refined: return "refined";
    case ChangeKind::Contradicted: return "contradicted";
    case ChangeKind::Retired: return "retired";
    case ChangeKind::Duplicate: return "duplicate";
  }
  return "added";
}

std::size_t ChangeLog::count(ChangeKind k) const {
  return static_cast<std::size_t>(
      std::count_if(changes.begin(), changes.end(), [k](const Change& c) { return c.kind == k; }));
}

// ---------------------------------------------------------------------------

namespace {

const std::set<std::string>& stopwords() {
  static const std::set<std::string> words = {
      "a",    "an",   "the",  "and",  "or",   "but",  "of",   "to",   "in",   "on",    "at",   "by",
      "for",  "with", "from", "as",   "is",   "are",  "was",  "were", "be",   "been",  "being", "that",
      "this", "it",   "its",  "which", "who", "whom", "what", "into", "than", "then", "so",   "very"};
  return words;
}

std::set<std::string> content_tokens(std::string_view s) {
  std::set<std::string> out;
  for (auto& tok : text::word_tokens(s)) {
    if (!stopwords().count(tok)) out.insert(std::move(tok));
  }
  return out;
}

int cue_count(std::string_view s, const std::vector<std::string>& cues) {
  int n = 0;
  for (const auto& tok : text::word_tokens(s)) {
    for (const auto& cue : cues) {
      std::string c = text::to_lower(cue);
      bool suffix_cue = c.rfind("n'", 0) == 0;
      if (tok == c || (suffix_cue && tok.size() > c.size() && tok.compare(tok.size() - c.size(), c.size(), c) == 0)) {
        ++n;
        break;
      }
    }
  }
  return n;
}

bool has_token(std::string_view s, const std::string& word) {
  const std::string w = text::to_lower(word);
  for (const auto& tok : text::word_tokens(s)) {
    if (tok == w) return true;
  }
  return false;
}

// Triples about the same thing: same dimension and same target, or, lacking
// a target, the same predicate.
std::string merge_key(const MentalStateTriple& t) {
  std::string key(to_string(t.dimension));
  key += '|';
  key += t.target ? "t:" + text::normalize(*t.target) : "p:" + text::normalize(t.predicate_raw);
  return key;
}

bool same_content(const MentalStateTriple& a, const MentalStateTriple& b) {
  return a.dimension == b.dimension && text::normalize(a.predicate_raw) == text::normalize(b.predicate_raw) &&
         text::normalize(a.object) == text::normalize(b.object);
}

}  // namespace

double object_similarity(std::string_view a, std::string_view b) {
  auto ta = content_tokens(a);
  auto tb = content_tokens(b);
  if (ta.empty() && tb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& t : ta) inter += tb.count(t);
  const std::size_t uni = ta.size() + tb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

bool objects_contradict(std::string_view older, std::string_view newer, const MergeConfig& config) {
  if ((cue_count(older, config.negation_cues) % 2) != (cue_count(newer, config.negation_cues) % 2)) return true;
  for (const auto& [a, b] : config.antonym_pairs) {
    if ((has_token(older, a) && has_token(newer, b)) || (has_token(older, b) && has_token(newer, a))) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------

TemporalKG::TemporalKG(std::string book_id, int plot_count) : book_id_(std::move(book_id)), plot_count_(plot_count) {
  if (plot_count_ < 0) throw Error(ErrorCode::PlotOutOfRange, "negative plot count");
}

void TemporalKG::register_character(const std::string& name) {
  if (text::trim(name).empty()) throw Error(ErrorCode::UnknownCharacter, "empty character name");
  nodes_.try_emplace(name, CharacterNode{name, {}, 0});
}

bool TemporalKG::has_character(const std::string& name) const { return nodes_.count(name) > 0; }

const MentalStateTriple* TemporalKG::find_edge(const std::string& id) const {
  auto it = edge_index_.find(id);
  return it == edge_index_.end() ? nullptr : &edges_[it->second];
}

std::string TemporalKG::next_id() { return "e" + std::to_string(next_edge_++); }

void TemporalKG::check_plot(int plot) const {
  if (plot < 1 || plot > plot_count_) {
    throw Error(ErrorCode::PlotOutOfRange, "plot " + std::to_string(plot) + " outside 1.." +
                                               std::to_string(plot_count_) + " of " + book_id_);
  }
}

ChangeLog TemporalKG::insert_batch(const TripleBatch& batch, const MergeConfig& config) {
  check_plot(batch.plot_index);
  for (const auto& t : batch.triples) {
    if (t.subject != batch.character) {
      throw Error(ErrorCode::ForeignSubject, "triple " + t.render() + " in batch for " + batch.character);
    }
    if (t.plot_index != batch.plot_index) {
      throw Error(ErrorCode::PlotOutOfRange, "triple " + t.render() + " tagged plot " + std::to_string(t.plot_index) +
                                                 " in batch for plot " + std::to_string(batch.plot_index));
    }
  }
  if (auto it = nodes_.find(batch.character); it != nodes_.end() && batch.plot_index < it->second.last_batch_plot) {
    throw Error(ErrorCode::NonMonotoneInsert, batch.character + " already has plot " +
                                                  std::to_string(it->second.last_batch_plot) + ", got plot " +
                                                  std::to_string(batch.plot_index));
  }

  register_character(batch.character);
  CharacterNode& node = nodes_.at(batch.character);
  node.last_batch_plot = batch.plot_index;

  ChangeLog log;
  log.character = batch.character;
  log.plot_index = batch.plot_index;

  // Current active set, as edge positions.
  std::vector<std::size_t> prior;
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    if (edges_[i].subject == batch.character && edges_[i].status == TripleStatus::Active) prior.push_back(i);
  }
  std::vector<bool> matched(prior.size(), false);

  auto add_edge = [&](const MentalStateTriple& src) -> std::size_t {
    MentalStateTriple t = src;
    t.id = next_id();
    t.status = TripleStatus::Active;
    t.supersedes.reset();
    edge_index_[t.id] = edges_.size();
    edges_.push_back(std::move(t));
    node.plots_seen.insert(batch.plot_index);
    return edges_.size() - 1;
  };
  auto supersede = [&](std::size_t old_pos, std::size_t new_pos, SupersedeReason reason) {
    edges_[old_pos].status = TripleStatus::Superseded;
    edges_[new_pos].supersedes = edges_[old_pos].id;
    links_.push_back({edges_[old_pos].id, edges_[new_pos].id, reason});
    log.changes.push_back({reason == SupersedeReason::Refined ? ChangeKind::Refined : ChangeKind::Contradicted,
                           edges_[new_pos].id, edges_[old_pos].id});
  };

  for (const auto& incoming : batch.triples) {
    // Exact restatement of an active triple.
    std::optional<std::size_t> same;
    for (std::size_t k = 0; k < prior.size() && !same; ++k) {
      if (!matched[k] && same_content(edges_[prior[k]], incoming)) same = k;
    }
    if (same) {
      matched[*same] = true;
      log.changes.push_back({config.mode == MergeMode::TrustLlmDiff ? ChangeKind::Unchanged : ChangeKind::Duplicate,
                             edges_[prior[*same]].id, edges_[prior[*same]].id});
      continue;
    }

    const std::string key = merge_key(incoming);
    std::optional<std::size_t> related;
    for (std::size_t k = 0; k < prior.size() && !related; ++k) {
      const auto& old = edges_[prior[k]];
      if (matched[k] || old.plot_index >= batch.plot_index || merge_key(old) != key) continue;
      if (config.mode == MergeMode::DeterministicMerge &&
          object_similarity(old.object, incoming.object) < config.jaccard_threshold) {
        continue;
      }
      related = k;
    }

    std::size_t pos = add_edge(incoming);
    if (related) {
      matched[*related] = true;
      const auto& old = edges_[prior[*related]];
      SupersedeReason reason = SupersedeReason::Refined;
      if (config.mode == MergeMode::TrustLlmDiff && objects_contradict(old.object, incoming.object, config)) {
        reason = SupersedeReason::Contradicted;
      }
      supersede(prior[*related], pos, reason);
    } else {
      log.changes.push_back({ChangeKind::Added, edges_[pos].id, {}});
    }
  }

  // An empty batch carries no information, so it retires nothing.
  if (config.mode == MergeMode::TrustLlmDiff && !batch.triples.empty()) {
    for (std::size_t k = 0; k < prior.size(); ++k) {
      auto& old = edges_[prior[k]];
      if (matched[k] || old.plot_index >= batch.plot_index) continue;
      old.status = TripleStatus::Retired;
      retirements_.push_back({old.id, batch.plot_index});
      log.changes.push_back({ChangeKind::Retired, old.id, {}});
    }
  }
  return log;
}

std::vector<MentalStateTriple> TemporalKG::state_at(const std::string& character, int plot_t) const {
  if (!has_character(character)) throw Error(ErrorCode::UnknownCharacter, character + " is not in " + book_id_);
  check_plot(plot_t);

  std::set<std::string> gone;
  for (const auto& link : links_) {
    const auto* successor = find_edge(link.new_id);
    if (successor != nullptr && successor->plot_index <= plot_t) gone.insert(link.old_id);
  }
  for (const auto& r : retirements_) {
    if (r.plot_index <= plot_t) gone.insert(r.triple_id);
  }

  std::vector<MentalStateTriple> out;
  for (const auto& e : edges_) {
    if (e.subject == character && e.plot_index <= plot_t && !gone.count(e.id)) out.push_back(e);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.plot_index < b.plot_index; });
  return out;
}

std::vector<TimelineRecord> TemporalKG::timeline(const std::string& character,
                                                 std::optional<Dimension> dimension) const {
  if (!has_character(character)) throw Error(ErrorCode::UnknownCharacter, character + " is not in " + book_id_);
  std::vector<TimelineRecord> out;
  for (const auto& e : edges_) {
    if (e.subject != character || (dimension && e.dimension != *dimension)) continue;
    TimelineRecord rec;
    rec.plot_index = e.plot_index;
    rec.triple = e;
    for (const auto& link : links_) {
      if (link.new_id == e.id) rec.replaces = link;
      if (link.old_id == e.id) rec.replaced_by = link;
    }
    for (const auto& r : retirements_) {
      if (r.triple_id == e.id) rec.retired_at = r.plot_index;
    }
    out.push_back(std::move(rec));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.plot_index < b.plot_index; });
  return out;
}

std::vector<std::string> TemporalKG::check_invariants() const {
  std::vector<std::string> problems;
  std::map<std::string, std::set<int>> seen;
  for (const auto& e : edges_) {
    if (!nodes_.count(e.subject)) problems.push_back("edge " + e.id + " has unregistered subject " + e.subject);
    if (e.plot_index < 1 || e.plot_index > plot_count_) problems.push_back("edge " + e.id + " plot out of range");
    seen[e.subject].insert(e.plot_index);
  }
  for (const auto& [name, node] : nodes_) {
    auto it = seen.find(name);
    const std::set<int> expected = it == seen.end() ? std::set<int>{} : it->second;
    if (node.plots_seen != expected) problems.push_back("plots_seen mismatch for " + name);
  }

  std::map<std::string, std::string> next;
  for (const auto& link : links_) {
    const auto* a = find_edge(link.old_id);
    const auto* b = find_edge(link.new_id);
    if (a == nullptr || b == nullptr) {
      problems.push_back("link " + link.old_id + "->" + link.new_id + " references a missing edge");
      continue;
    }
    if (!(a->plot_index < b->plot_index)) problems.push_back("link " + link.old_id + "->" + link.new_id + " not monotone");
    if (a->status != TripleStatus::Superseded) problems.push_back("edge " + a->id + " superseded but not marked");
    if (next.count(link.old_id)) problems.push_back("edge " + link.old_id + " superseded twice");
    next[link.old_id] = link.new_id;
  }
  // Each node has at most one successor, so following the chain from every
  // start either terminates or revisits a node.
  for (const auto& [start, unused] : next) {
    std::set<std::string> visited{start};
    std::string cur = start;
    while (next.count(cur)) {
      cur = next.at(cur);
      if (!visited.insert(cur).second) {
        problems.push_back("supersede cycle through " + start);
        break;
      }
    }
  }
  return problems;
}

}  // namespace evolvtrip
