#include "evolvtrip/triples.hpp"

#include <algorithm>
#include <cctype>
#include <regex>

#include "evolvtrip/error.hpp"
#include "evolvtrip/text.hpp"

using nlohmann::json;

namespace evolvtrip {

std::string_view to_string(Dimension d) {
  switch (d) {
    case Dimension::Belief: return "Belief";
    case Dimension::Desire: return "Desire";
    case Dimension::Emotion: return "Emotion";
    case Dimension::Intention: return "Intention";
  }
  return "Belief";
}

Dimension dimension_from_string(std::string_view s) {
  for (Dimension d : kAllDimensions) {
    if (text::iequals(s, to_string(d))) return d;
  }
  throw Error(ErrorCode::MissingDimension, "unknown dimension '" + std::string(s) + "'");
}

std::string_view to_string(TripleStatus s) {
  switch (s) {
    case TripleStatus::Active: return "active";
    case TripleStatus::Superseded: return "superseded";
    case TripleStatus::Retired: return "retired";
  }
  return "active";
}

TripleStatus triple_status_from_string(std::string_view s) {
  if (text::iequals(s, "active")) return TripleStatus::Active;
  if (text::iequals(s, "superseded")) return TripleStatus::Superseded;
  if (text::iequals(s, "retired")) return TripleStatus::Retired;
  throw Error(ErrorCode::MalformedRecord, "unknown triple status '" + std::string(s) + "'");
}

std::string MentalStateTriple::render() const { return "(" + subject + ", " + predicate_raw + ", " + object + ")"; }

json MentalStateTriple::to_json() const {
  json j{{"id", id},
         {"subject", subject},
         {"predicate", predicate_raw},
         {"dimension", to_string(dimension)},
         {"target", target ? json(*target) : json(nullptr)},
         {"object", object},
         {"plot_index", plot_index},
         {"status", to_string(status)},
         {"supersedes", supersedes ? json(*supersedes) : json(nullptr)}};
  return j;
}

MentalStateTriple MentalStateTriple::from_json(const json& j) {
  try {
    MentalStateTriple t;
    t.id = j.at("id").get<std::string>();
    t.subject = j.at("subject").get<std::string>();
    t.predicate_raw = j.at("predicate").get<std::string>();
    t.dimension = dimension_from_string(j.at("dimension").get<std::string>());
    if (j.contains("target") && !j.at("target").is_null()) t.target = j.at("target").get<std::string>();
    t.object = j.at("object").get<std::string>();
    t.plot_index = j.at("plot_index").get<int>();
    t.status = triple_status_from_string(j.value("status", "active"));
    if (j.contains("supersedes") && !j.at("supersedes").is_null()) t.supersedes = j.at("supersedes").get<std::string>();
    return t;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("triple record: ") + e.what());
  }
}

TripleBatch make_batch(std::string character, int plot_index, std::vector<MentalStateTriple> triples,
                       std::string raw_response) {
  const std::string want = text::normalize(character);
  for (auto& t : triples) {
    if (text::normalize(t.subject) != want) {
      throw Error(ErrorCode::ForeignSubject, "triple " + t.render() + " does not belong to " + character);
    }
    if (t.plot_index == 0) t.plot_index = plot_index;
    if (t.plot_index != plot_index) {
      throw Error(ErrorCode::PlotOutOfRange, "triple " + t.render() + " is tagged plot " +
                                                 std::to_string(t.plot_index) + ", batch is plot " +
                                                 std::to_string(plot_index));
    }
  }
  return TripleBatch{std::move(character), plot_index, std::move(triples), std::move(raw_response)};
}

// ---------------------------------------------------------------------------

namespace {

struct Stem {
  std::string_view prefix;
  Dimension dimension;
};

constexpr std::array<Stem, 4> kStems = {{{"Believes", Dimension::Belief},
                                         {"Desires", Dimension::Desire},
                                         {"Feels", Dimension::Emotion},
                                         {"Intends", Dimension::Intention}}};

// Longest first so "Toward" never shadows "Towards".
constexpr std::array<std::string_view, 9> kTargetParticles = {"Regarding", "Against", "Towards", "Toward", "About",
                                                              "With",      "For",     "Of",      "At"};

bool is_upper(char c) { return std::isupper(static_cast<unsigned char>(c)) != 0; }

// Particle at the start of `rest`, ending at a word boundary.
std::optional<std::string_view> particle_at(std::string_view rest) {
  for (auto p : kTargetParticles) {
    if (rest.size() < p.size() || !text::starts_with_ci(rest, p)) continue;
    if (rest.size() == p.size()) return p;
    char next = rest[p.size()];
    if (is_upper(next) || next == ' ' || next == '_') return p;
  }
  return std::nullopt;
}

std::string name_from_suffix(std::string_view suffix) {
  std::string s = text::trim(suffix);
  while (!s.empty() && (s.front() == '_' || s.front() == ' ')) s.erase(s.begin());
  if (s.empty() || !is_upper(s.front())) return {};
  // "Cordelia'sSilence" names Cordelia
  if (auto apos = s.find('\''); apos != std::string::npos) s = text::trim(s.substr(0, apos));
  for (char& c : s) {
    if (c == '_') c = ' ';
  }
  return text::split_camel_case(s);
}

}  // namespace

std::optional<Dimension> try_classify_dimension(std::string_view predicate_raw) {
  std::string p = text::trim(predicate_raw);
  std::optional<Dimension> best;
  std::size_t best_len = 0;
  for (const auto& stem : kStems) {
    if (text::starts_with_ci(p, stem.prefix) && stem.prefix.size() > best_len) {
      best = stem.dimension;
      best_len = stem.prefix.size();
    }
  }
  return best;
}

Dimension classify_dimension(std::string_view predicate_raw) {
  if (auto d = try_classify_dimension(predicate_raw)) return *d;
  throw Error(ErrorCode::UnknownPredicate, "predicate '" + std::string(predicate_raw) +
                                               "' does not start with Believes, Desires, Feels or Intends");
}

std::optional<std::string> extract_target(std::string_view predicate_raw, std::string_view /*object*/) {
  std::string p = text::trim(predicate_raw);
  std::size_t stem_len = 0;
  for (const auto& stem : kStems) {
    if (text::starts_with_ci(p, stem.prefix)) stem_len = stem.prefix.size();
  }
  if (stem_len == 0) return std::nullopt;
  std::string_view rest(p);
  rest.remove_prefix(stem_len);
  while (!rest.empty() && (rest.front() == ' ' || rest.front() == '_')) rest.remove_prefix(1);
  if (rest.empty()) return std::nullopt;

  // Particle directly after the stem, or later at a word boundary
  // ("FeelsAngerTowardsGoneril").
  for (std::size_t i = 0; i < rest.size(); ++i) {
    bool boundary = i == 0 || is_upper(rest[i]) || rest[i - 1] == ' ' || rest[i - 1] == '_';
    if (!boundary) continue;
    std::string_view here = rest.substr(i);
    if (text::starts_with_ci(here, "To") && !text::starts_with_ci(here, "Toward")) {
      if (here.size() == 2 || is_upper(here[2]) || here[2] == ' ') return std::nullopt;
    }
    if (auto particle = particle_at(here)) {
      std::string name = name_from_suffix(here.substr(particle->size()));
      if (name.empty()) return std::nullopt;
      return name;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

namespace {

std::string unquote(std::string s) {
  s = text::trim(s);
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\''))) {
    s = text::trim(std::string_view(s).substr(1, s.size() - 2));
  }
  return s;
}

// Balanced top-level "(...)" groups in source order. An unclosed trailing
// group is returned too, flagged so the caller can record it.
std::vector<std::pair<std::string, bool>> paren_groups(std::string_view s) {
  std::vector<std::pair<std::string, bool>> out;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '(') {
      if (depth == 0) start = i;
      ++depth;
    } else if (s[i] == ')' && depth > 0) {
      if (--depth == 0) out.emplace_back(std::string(s.substr(start, i - start + 1)), true);
    }
  }
  if (depth > 0) out.emplace_back(std::string(s.substr(start)), false);
  return out;
}

}  // namespace

std::optional<std::array<std::string, 3>> split_triple_entry(std::string_view entry) {
  std::string e = unquote(std::string(entry));
  if (!e.empty() && e.back() == ',') e = text::trim(std::string_view(e).substr(0, e.size() - 1));
  if (e.size() >= 2 && e.front() == '(' && e.back() == ')') {
    e = e.substr(1, e.size() - 2);
  } else if (!e.empty() && e.front() == '(') {
    e = e.substr(1);
  }
  std::array<std::size_t, 2> cuts{};
  int found = 0;
  int depth = 0;
  for (std::size_t i = 0; i < e.size() && found < 2; ++i) {
    char c = e[i];
    if (c == '(' || c == '[' || c == '{') ++depth;
    else if ((c == ')' || c == ']' || c == '}') && depth > 0) --depth;
    else if (c == ',' && depth == 0) cuts[found++] = i;
  }
  if (found < 2) return std::nullopt;
  std::array<std::string, 3> parts{unquote(e.substr(0, cuts[0])), unquote(e.substr(cuts[0] + 1, cuts[1] - cuts[0] - 1)),
                                   unquote(e.substr(cuts[1] + 1))};
  return parts;
}

MentalStateTriple make_triple(std::string subject, std::string predicate, std::string object, int plot_index) {
  MentalStateTriple t;
  t.subject = std::move(subject);
  t.predicate_raw = std::move(predicate);
  t.dimension = classify_dimension(t.predicate_raw);
  t.object = std::move(object);
  t.target = extract_target(t.predicate_raw, t.object);
  t.plot_index = plot_index;
  return t;
}

TripleParse parse_triple_response(std::string_view raw, int plot_index) {
  const std::string body = text::trim(text::strip_code_fence(raw));
  TripleParse out;
  std::vector<std::string> entries;
  bool structured = false;

  try {
    json j = json::parse(body);
    if (j.is_object() && !j.empty()) {
      auto it = j.find("Target Character");
      if (it == j.end()) it = j.begin();
      out.key = it.key();
      if (it->is_array()) {
        structured = true;
        for (const auto& e : *it) {
          if (e.is_string()) {
            entries.push_back(e.get<std::string>());
          } else if (e.is_array() && e.size() == 3) {
            entries.push_back("(" + e[0].get<std::string>() + ", " + e[1].get<std::string>() + ", " +
                              e[2].get<std::string>() + ")");
          } else {
            out.malformed.push_back({e.dump(), "entry is neither a string nor a three-element array"});
          }
        }
      }
    }
  } catch (const json::exception&) {
  }

  if (!structured) {
    static const std::regex key_re(R"re("([^"]+)"\s*:)re");
    std::smatch m;
    std::size_t scan_from = 0;
    if (std::regex_search(body, m, key_re)) {
      out.key = m[1].str();
      scan_from = static_cast<std::size_t>(m.position(0) + m.length(0));
    }
    for (auto& [group, closed] : paren_groups(std::string_view(body).substr(scan_from))) {
      if (!closed) {
        out.malformed.push_back({group, "unclosed parenthesis"});
        continue;
      }
      entries.push_back(group);
    }
    if (entries.empty() && out.malformed.empty()) {
      throw Error(ErrorCode::UnparseableResponse, "no triple structure found in response");
    }
  }

  int next_id = 1;
  for (const auto& entry : entries) {
    auto parts = split_triple_entry(entry);
    if (!parts) {
      out.malformed.push_back({entry, "fewer than two separators"});
      continue;
    }
    auto& [s, p, o] = *parts;
    if (s.empty() || p.empty() || o.empty()) {
      out.malformed.push_back({entry, "empty subject, predicate or object"});
      continue;
    }
    if (!try_classify_dimension(p)) {
      out.unknown_predicate.push_back({entry, "unknown predicate '" + p + "'"});
      continue;
    }
    MentalStateTriple t = make_triple(s, p, o, plot_index);
    t.id = "t" + std::to_string(next_id++);
    out.triples.push_back(std::move(t));
  }
  return out;
}

std::string render_batch_response(const std::vector<MentalStateTriple>& triples) {
  json arr = json::array();
  for (const auto& t : triples) arr.push_back(t.render());
  json j{{"Target Character", std::move(arr)}};
  return j.dump(4);
}

// ---------------------------------------------------------------------------

std::string_view to_string(Violation v) {
  switch (v) {
    case Violation::PronounInObject: return "PronounInObject";
    case Violation::SubjectMismatch: return "SubjectMismatch";
    case Violation::UnknownTarget: return "UnknownTarget";
    case Violation::DimensionMismatch: return "DimensionMismatch";
  }
  return "PronounInObject";
}

bool contains_pronoun(std::string_view object) {
  static const std::set<std::string> pronouns = {"he", "she", "his", "her", "him", "they", "them", "their"};
  for (const auto& tok : text::word_tokens(object)) {
    if (pronouns.count(tok)) return true;
  }
  return false;
}

std::vector<Violation> validate_triple(const MentalStateTriple& triple, std::string_view character,
                                       const std::set<std::string>& visible_cast,
                                       const CharacterRegistry* registry) {
  std::vector<Violation> out;
  if (contains_pronoun(triple.object)) out.push_back(Violation::PronounInObject);

  bool same_subject = text::normalize(triple.subject) == text::normalize(character);
  if (!same_subject && registry != nullptr) {
    auto a = registry->lookup(triple.subject);
    auto b = registry->lookup(character);
    same_subject = a && b && *a == *b;
  }
  if (!same_subject) out.push_back(Violation::SubjectMismatch);

  if (triple.target) {
    const std::string want = text::normalize(*triple.target);
    bool known = std::any_of(visible_cast.begin(), visible_cast.end(),
                             [&](const std::string& name) { return text::normalize(name) == want; });
    if (!known && registry != nullptr) known = registry->contains(*triple.target);
    if (!known) out.push_back(Violation::UnknownTarget);
  }

  auto d = try_classify_dimension(triple.predicate_raw);
  if (!d || *d != triple.dimension) out.push_back(Violation::DimensionMismatch);
  return out;
}

std::set<std::string> visible_cast(const Plot& plot, std::string_view character) {
  std::set<std::string> cast;
  for (const auto& conv : plot.conversations) {
    auto names = conv.cast();
    bool present = std::any_of(names.begin(), names.end(), [&](const std::string& n) { return n == character; });
    if (present) cast.insert(names.begin(), names.end());
  }
  return cast;
}

// ---------------------------------------------------------------------------

json GenerationSettings::to_json() const {
  return json{{"model_id", model_id},
              {"temperature", temperature},
              {"max_output_tokens", max_output_tokens},
              {"seed", seed ? json(*seed) : json(nullptr)}};
}

GenerationSettings GenerationSettings::from_json(const json& j, GenerationSettings s) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigInvalid, "model settings must be an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "model_id") {
        s.model_id = value.get<std::string>();
      } else if (key == "temperature") {
        s.temperature = value.get<double>();
      } else if (key == "max_output_tokens") {
        s.max_output_tokens = value.get<int>();
      } else if (key == "seed") {
        if (value.is_null()) s.seed.reset();
        else s.seed = value.get<std::int64_t>();
      } else {
        throw Error(ErrorCode::ConfigInvalid, "unknown model setting '" + key + "'");
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ConfigInvalid, key + ": " + e.what());
    }
  }
  if (s.model_id.empty()) throw Error(ErrorCode::ConfigInvalid, "model_id must not be empty");
  return s;
}

std::string render_dialogues(const std::vector<Conversation>& conversations) {
  std::string out;
  for (const auto& conv : conversations) {
    if (!out.empty()) out += "\n";
    if (!conv.environment.empty()) out += "Environment: " + conv.environment + "\n";
    for (const auto& turn : conv.turns) out += turn.speaker + ": " + turn.utterance() + "\n";
  }
  if (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

std::string render_previous_triples(const std::vector<MentalStateTriple>& triples) {
  std::vector<const MentalStateTriple*> ordered;
  ordered.reserve(triples.size());
  for (const auto& t : triples) ordered.push_back(&t);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto* a, const auto* b) { return a->plot_index < b->plot_index; });
  std::string out;
  for (const auto* t : ordered) {
    if (!out.empty()) out += "\n";
    out += t->render();
  }
  return out;
}

ChatRequest build_extraction_prompt(const Plot& plot, const std::vector<Conversation>& conversations,
                                    const std::string& character,
                                    const std::vector<MentalStateTriple>& previous_triples,
                                    const GenerationSettings& settings, const TemplateSet& templates) {
  bool present = false;
  for (const auto& conv : conversations) {
    for (const auto& turn : conv.turns) {
      if (text::normalize(turn.speaker) == text::normalize(character)) present = true;
    }
  }
  if (!present) {
    throw Error(ErrorCode::CharacterAbsent, character + " does not speak in plot " + std::to_string(plot.index) +
                                                " of " + plot.book_id);
  }
  std::string prompt = templates.get("triple_extraction")
                           .render({{"plot_summary", plot.summary},
                                    {"scenario", plot.scenario},
                                    {"dialogues", render_dialogues(conversations)},
                                    {"target_character", character},
                                    {"previous_triples", render_previous_triples(previous_triples)}});
  return make_request(settings.model_id, std::move(prompt), settings.temperature, settings.max_output_tokens,
                      settings.seed);
}

}  // namespace evolvtrip
