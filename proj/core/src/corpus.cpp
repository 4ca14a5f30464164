#include "evolvtrip/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "evolvtrip/error.hpp"
#include "evolvtrip/text.hpp"

namespace evolvtrip {

std::string_view to_string(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::Speech: return "speech";
    case SegmentKind::Action: return "action";
    case SegmentKind::Thought: return "thought";
  }
  return "speech";
}

SegmentKind segment_kind_from_string(std::string_view s) {
  if (text::iequals(s, "speech")) return SegmentKind::Speech;
  if (text::iequals(s, "action")) return SegmentKind::Action;
  if (text::iequals(s, "thought")) return SegmentKind::Thought;
  throw Error(ErrorCode::MalformedRecord, "unknown segment kind '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Turn segmentation
// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kDelimiters = "[]()";

}  // namespace

std::vector<UtteranceSegment> segment_utterance(std::string_view s, std::vector<std::string>* warnings) {
  std::vector<UtteranceSegment> out;
  std::string speech;
  auto warn = [&](std::string msg) {
    if (warnings) warnings->push_back(std::move(msg));
  };
  auto flush_speech = [&] {
    std::string t = text::trim(speech);
    if (!t.empty()) {
      // adjacent speech pieces (e.g. around a degraded span) merge
      if (!out.empty() && out.back().kind == SegmentKind::Speech) {
        out.back().text += " " + t;
      } else {
        out.push_back({SegmentKind::Speech, std::move(t)});
      }
    }
    speech.clear();
  };

  std::size_t i = 0;
  while (i < s.size()) {
    char c = s[i];
    if (c == '[' || c == '(') {
      const char close = c == '[' ? ']' : ')';
      const SegmentKind kind = c == '[' ? SegmentKind::Thought : SegmentKind::Action;
      std::size_t k = s.find(close, i + 1);
      if (k == std::string_view::npos) {
        warn("unbalanced '" + std::string(1, c) + "' at offset " + std::to_string(i) + "; kept as speech");
        speech.push_back(c);
        ++i;
        continue;
      }
      std::string_view inner = s.substr(i + 1, k - i - 1);
      if (inner.find_first_of(kDelimiters) != std::string_view::npos) {
        warn("nested delimiters at offset " + std::to_string(i) + "; span kept as speech");
        speech.append(s.substr(i, k - i + 1));
        i = k + 1;
        continue;
      }
      std::string body = text::trim(inner);
      if (body.empty()) {
        warn("empty delimited span at offset " + std::to_string(i) + "; kept as speech");
        speech.append(s.substr(i, k - i + 1));
      } else {
        flush_speech();
        out.push_back({kind, std::move(body)});
      }
      i = k + 1;
      continue;
    }
    if (c == ']' || c == ')') {
      warn("stray '" + std::string(1, c) + "' at offset " + std::to_string(i) + "; kept as speech");
    }
    speech.push_back(c);
    ++i;
  }
  flush_speech();
  return out;
}

ParsedTurn parse_turn(std::string_view line) {
  std::string_view s = line;
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  bool quoted = !s.empty() && s.front() == '"';
  if (quoted) s.remove_prefix(1);

  auto colon = s.find(':');
  if (colon == std::string_view::npos) {
    throw Error(ErrorCode::NoSpeaker, "no 'Name:' prefix in line: " + std::string(line.substr(0, 60)));
  }
  std::string speaker = text::trim(s.substr(0, colon));
  if (speaker.empty() || speaker.find_first_of(kDelimiters) != std::string::npos ||
      speaker.find('"') != std::string::npos) {
    throw Error(ErrorCode::NoSpeaker, "no 'Name:' prefix in line: " + std::string(line.substr(0, 60)));
  }
  std::string_view rest = s.substr(colon + 1);
  std::string body = text::trim(rest);
  if (quoted && !body.empty() && body.back() == '"') body.pop_back();

  ParsedTurn parsed;
  parsed.turn.speaker = std::move(speaker);
  parsed.turn.segments = segment_utterance(body, &parsed.warnings);
  return parsed;
}

std::string Turn::utterance() const {
  std::string out;
  for (const auto& seg : segments) {
    if (!out.empty()) out.push_back(' ');
    switch (seg.kind) {
      case SegmentKind::Speech: out += seg.text; break;
      case SegmentKind::Action: out += "(" + seg.text + ")"; break;
      case SegmentKind::Thought: out += "[" + seg.text + "]"; break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corpus records
// ---------------------------------------------------------------------------

std::vector<std::string> Conversation::cast() const {
  std::vector<std::string> names;
  for (const auto& t : turns) {
    if (std::find(names.begin(), names.end(), t.speaker) == names.end()) names.push_back(t.speaker);
  }
  return names;
}

std::vector<std::string> Plot::speakers() const {
  std::vector<std::string> names;
  for (const auto& c : conversations) {
    for (const auto& n : c.cast()) {
      if (std::find(names.begin(), names.end(), n) == names.end()) names.push_back(n);
    }
  }
  return names;
}

bool Plot::has_speaker(std::string_view name) const {
  for (const auto& c : conversations) {
    for (const auto& t : c.turns) {
      if (t.speaker == name) return true;
    }
  }
  return false;
}

const Plot* Book::find_plot(int index) const {
  for (const auto& p : plots) {
    if (p.index == index) return &p;
  }
  return nullptr;
}

const Book* Corpus::find_book(std::string_view id_or_title) const {
  for (const auto& b : books) {
    if (b.id == id_or_title) return &b;
  }
  for (const auto& b : books) {
    if (text::normalize(b.title) == text::normalize(id_or_title)) return &b;
  }
  return nullptr;
}

const Plot* Corpus::find_plot(std::string_view book_id, int index) const {
  const Book* b = find_book(book_id);
  return b ? b->find_plot(index) : nullptr;
}

void validate_book(const Book& book) {
  for (std::size_t i = 0; i < book.plots.size(); ++i) {
    const Plot& p = book.plots[i];
    const std::string rec = book.id + "#plot" + std::to_string(p.index);
    for (std::size_t j = 0; j < i; ++j) {
      if (book.plots[j].index == p.index) {
        throw Error(ErrorCode::DuplicatePlotIndex, book.id + " has plot index " + std::to_string(p.index) + " twice");
      }
    }
    if (p.index != static_cast<int>(i) + 1) {
      throw Error(ErrorCode::MalformedRecord,
                  rec + ": plot indices must run 1..N in order (found " + std::to_string(p.index) + " at position " +
                      std::to_string(i + 1) + ")");
    }
    if (text::trim(p.summary).empty()) throw Error(ErrorCode::MalformedRecord, rec + ": empty summary");
    if (text::trim(p.scenario).empty()) throw Error(ErrorCode::MalformedRecord, rec + ": empty scenario");
    for (std::size_t c = 0; c < p.conversations.size(); ++c) {
      const auto& conv = p.conversations[c];
      if (conv.turns.empty()) {
        throw Error(ErrorCode::MalformedRecord, rec + ": conversation " + std::to_string(c + 1) + " has no turns");
      }
      for (const auto& t : conv.turns) {
        if (t.segments.empty()) {
          throw Error(ErrorCode::MalformedRecord,
                      rec + ": empty utterance for " + t.speaker + " in conversation " + std::to_string(c + 1));
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// CharacterRegistry
// ---------------------------------------------------------------------------

void CharacterRegistry::add_canonical(const std::string& canonical) {
  const std::string key = text::normalize(canonical);
  if (key.empty()) throw Error(ErrorCode::MalformedRecord, "empty character name");
  if (auto it = index_.find(key); it != index_.end() && it->second != canonical) {
    throw Error(ErrorCode::AliasConflict, "'" + canonical + "' is already an alias of '" + it->second + "'");
  }
  if (ambiguous_.count(key)) {
    throw Error(ErrorCode::AliasConflict, "'" + canonical + "' is an ambiguous alias");
  }
  aliases_[canonical].insert(canonical);
  index_[key] = canonical;
}

void CharacterRegistry::add_alias(const std::string& canonical, const std::string& alias) {
  if (!aliases_.count(canonical)) add_canonical(canonical);
  const std::string key = text::normalize(alias);
  if (key.empty()) return;
  if (auto amb = ambiguous_.find(key); amb != ambiguous_.end()) {
    amb->second.insert(canonical);
    return;
  }
  auto it = index_.find(key);
  if (it == index_.end()) {
    index_[key] = canonical;
    aliases_[canonical].insert(alias);
    return;
  }
  if (it->second == canonical) return;
  const std::string other = it->second;
  if (text::normalize(other) == key) {
    throw Error(ErrorCode::AliasConflict, "'" + alias + "' is the canonical name of another character");
  }
  // Shared alias: remove from both owners, remember the collision.
  auto drop = [&](const std::string& owner) {
    auto& set = aliases_[owner];
    for (auto s = set.begin(); s != set.end();) {
      s = text::normalize(*s) == key ? set.erase(s) : std::next(s);
    }
  };
  drop(other);
  index_.erase(it);
  ambiguous_[key] = {other, canonical};
}

std::optional<std::string> CharacterRegistry::lookup(std::string_view name) const {
  const std::string key = text::normalize(name);
  if (auto amb = ambiguous_.find(key); amb != ambiguous_.end()) {
    throw Error(ErrorCode::AmbiguousAlias,
                "'" + std::string(name) + "' matches " + text::join({amb->second.begin(), amb->second.end()}, ", "));
  }
  if (auto it = index_.find(key); it != index_.end()) return it->second;
  return std::nullopt;
}

std::string CharacterRegistry::resolve(std::string_view name) {
  if (auto found = lookup(name)) return *found;
  std::string canonical = text::trim(name);
  // collapse internal whitespace but keep the original casing
  std::string cleaned;
  for (char c : canonical) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cleaned.empty() && cleaned.back() != ' ') cleaned.push_back(' ');
    } else {
      cleaned.push_back(c);
    }
  }
  add_canonical(cleaned);
  return cleaned;
}

bool CharacterRegistry::contains(std::string_view name) const {
  const std::string key = text::normalize(name);
  return index_.count(key) > 0 || ambiguous_.count(key) > 0;
}

std::vector<std::string> CharacterRegistry::canonical_names() const {
  std::vector<std::string> names;
  for (const auto& [canonical, _] : aliases_) names.push_back(canonical);
  return names;
}

const std::set<std::string>& CharacterRegistry::aliases_of(const std::string& canonical) const {
  static const std::set<std::string> kEmpty;
  auto it = aliases_.find(canonical);
  return it == aliases_.end() ? kEmpty : it->second;
}

std::map<std::string, CharacterRegistry> parse_alias_table(std::string_view data) {
  std::map<std::string, CharacterRegistry> out;
  std::string book;
  std::size_t line_no = 0;
  for (const auto& raw : text::split(data, '\n')) {
    ++line_no;
    std::string line = text::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (text::starts_with_ci(line, "book:")) {
      book = text::trim(std::string_view(line).substr(5));
      if (book.empty()) throw Error(ErrorCode::MalformedRecord, "alias table line " + std::to_string(line_no) + ": empty book id");
      out[book];
      continue;
    }
    if (book.empty()) {
      throw Error(ErrorCode::MalformedRecord,
                  "alias table line " + std::to_string(line_no) + ": entry before any 'book:' header");
    }
    auto eq = line.find('=');
    std::string canonical = text::trim(std::string_view(line).substr(0, eq));
    if (canonical.empty()) {
      throw Error(ErrorCode::MalformedRecord, "alias table line " + std::to_string(line_no) + ": missing canonical name");
    }
    auto& reg = out[book];
    reg.add_canonical(canonical);
    if (eq == std::string::npos) continue;
    for (const auto& alias : text::split(std::string_view(line).substr(eq + 1), ',')) {
      std::string a = text::trim(alias);
      if (!a.empty()) reg.add_alias(canonical, a);
    }
  }
  return out;
}

std::map<std::string, CharacterRegistry> load_alias_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::UnreadableSource, "cannot read alias table " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_alias_table(buf.str());
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

std::int64_t CountStats::avg_speakers_hundredths() const {
  return conversations > 0 ? text::ratio_hundredths(speaker_slots, conversations) : 0;
}

std::int64_t CountStats::conversations_per_plot_hundredths() const {
  return plots > 0 ? text::ratio_hundredths(conversations, plots) : 0;
}

StatsReport corpus_stats(const Corpus& corpus, const std::map<std::string, CharacterRegistry>* aliases) {
  StatsReport report;
  for (const auto& book : corpus.books) {
    BookStats bs{book.id, book.title, {}};
    const CharacterRegistry* reg = nullptr;
    if (aliases) {
      if (auto it = aliases->find(book.id); it != aliases->end()) reg = &it->second;
    }
    bs.counts.plots = static_cast<std::int64_t>(book.plots.size());
    for (const auto& plot : book.plots) {
      for (const auto& conv : plot.conversations) {
        ++bs.counts.conversations;
        std::set<std::string> distinct;
        for (const auto& t : conv.turns) {
          std::optional<std::string> canonical = reg ? reg->lookup(t.speaker) : std::nullopt;
          distinct.insert(canonical ? *canonical : t.speaker);
        }
        bs.counts.speaker_slots += static_cast<std::int64_t>(distinct.size());
      }
    }
    report.total.plots += bs.counts.plots;
    report.total.conversations += bs.counts.conversations;
    report.total.speaker_slots += bs.counts.speaker_slots;
    report.books.push_back(std::move(bs));
  }
  return report;
}

std::string StatsReport::render() const {
  std::size_t width = 5;
  for (const auto& b : books) width = std::max(width, b.title.size());
  std::ostringstream out;
  auto row = [&](const std::string& name, const CountStats& c) {
    out << std::left << std::setw(static_cast<int>(width)) << name << "  " << std::right << std::setw(5) << c.plots
        << "  " << std::setw(13) << c.conversations << "  " << std::setw(13)
        << (text::format_hundredths(c.avg_speakers_hundredths()) + (c.mean_defined() ? "" : "*")) << "  "
        << std::setw(10) << text::format_hundredths(c.conversations_per_plot_hundredths()) << "\n";
  };
  out << std::left << std::setw(static_cast<int>(width)) << "Book" << "  " << std::right << std::setw(5) << "Plots"
      << "  " << std::setw(13) << "Conversations" << "  " << std::setw(13) << "Avg Character" << "  "
      << std::setw(10) << "Conv/Plot" << "\n";
  for (const auto& b : books) row(b.title, b.counts);
  row("Total", total);
  if (!total.mean_defined()) out << "* no conversations: mean undefined, reported as 0.00\n";
  return out.str();
}

nlohmann::json StatsReport::to_json() const {
  auto counts = [](const CountStats& c) {
    return nlohmann::json{{"plots", c.plots},
                          {"conversations", c.conversations},
                          {"speaker_slots", c.speaker_slots},
                          {"avg_characters", text::format_hundredths(c.avg_speakers_hundredths())},
                          {"avg_characters_defined", c.mean_defined()},
                          {"conversations_per_plot", text::format_hundredths(c.conversations_per_plot_hundredths())}};
  };
  nlohmann::json j;
  j["books"] = nlohmann::json::array();
  for (const auto& b : books) {
    auto entry = counts(b.counts);
    entry["book_id"] = b.book_id;
    entry["title"] = b.title;
    j["books"].push_back(std::move(entry));
  }
  j["total"] = counts(total);
  return j;
}

}  // namespace evolvtrip
