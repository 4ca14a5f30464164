#include "evolvtrip/qagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "evolvtrip/csv.hpp"
#include "evolvtrip/error.hpp"
#include "evolvtrip/hashing.hpp"
#include "evolvtrip/text.hpp"

using nlohmann::json;

namespace evolvtrip {

std::string_view to_string(QuestionState s) {
  switch (s) {
    case QuestionState::Generated: return "generated";
    case QuestionState::LlmVerified: return "llm_verified";
    case QuestionState::HumanVerified: return "human_verified";
    case QuestionState::Rejected: return "rejected";
  }
  return "generated";
}

QuestionState question_state_from_string(std::string_view s) {
  for (auto st : {QuestionState::Generated, QuestionState::LlmVerified, QuestionState::HumanVerified,
                  QuestionState::Rejected}) {
    if (text::iequals(s, to_string(st))) return st;
  }
  throw Error(ErrorCode::MalformedRecord, "unknown question state '" + std::string(s) + "'");
}

std::string TomQuestion::render_options() const {
  std::string out;
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (i) out += "\n";
    out += std::string(1, static_cast<char>('A' + i)) + ". " + options[i];
  }
  return out;
}

json TomQuestion::to_json() const {
  return json{{"id", id},
              {"book_id", book_id},
              {"plot_index", plot_index},
              {"character", character},
              {"dimension", to_string(dimension)},
              {"scenario", scenario},
              {"reasoning", reasoning},
              {"stem", stem},
              {"options", options},
              {"correct", std::string(1, correct)},
              {"state", to_string(state)},
              {"attempt", attempt},
              {"permutation", permutation},
              {"notes", notes}};
}

TomQuestion TomQuestion::from_json(const json& j) {
  TomQuestion q;
  try {
    q.id = j.at("id").get<std::string>();
    q.book_id = j.at("book_id").get<std::string>();
    q.plot_index = j.at("plot_index").get<int>();
    q.character = j.at("character").get<std::string>();
    q.dimension = dimension_from_string(j.at("dimension").get<std::string>());
    q.scenario = j.value("scenario", "");
    q.reasoning = j.value("reasoning", "");
    q.stem = j.at("stem").get<std::string>();
    const auto& opts = j.at("options");
    if (!opts.is_array() || opts.size() != 4) {
      throw Error(ErrorCode::BadOptionCount, q.id + ": expected 4 options");
    }
    for (std::size_t i = 0; i < 4; ++i) q.options[i] = opts[i].get<std::string>();
    const std::string c = j.at("correct").get<std::string>();
    q.correct = c.size() == 1 ? c[0] : '?';
    q.state = question_state_from_string(j.value("state", "generated"));
    q.attempt = j.value("attempt", 1);
    if (j.contains("permutation")) q.permutation = j.at("permutation").get<std::array<int, 4>>();
    q.notes = j.value("notes", "");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("question record: ") + e.what());
  }
  check_question(q);
  return q;
}

std::string question_id(const std::string& book_id, int plot_index, const std::string& character, Dimension d) {
  return book_id + ":" + std::to_string(plot_index) + ":" + text::slugify(character) + ":" +
         text::to_lower(to_string(d));
}

void check_question(const TomQuestion& q) {
  if (q.correct < 'A' || q.correct > 'D') {
    throw Error(ErrorCode::AmbiguousCorrect, q.id + ": correct answer must be one of A-D");
  }
  std::set<std::string> seen;
  for (const auto& o : q.options) {
    const std::string n = text::normalize(o);
    if (n.empty()) throw Error(ErrorCode::BadOptionCount, q.id + ": empty option");
    if (!seen.insert(n).second) throw Error(ErrorCode::DuplicateOptions, q.id + ": duplicate option '" + o + "'");
  }
  if (q.attempt < 1) throw Error(ErrorCode::MalformedRecord, q.id + ": attempt must be >= 1");
}

std::string strip_option_label(std::string_view option) {
  std::string s = text::trim(option);
  auto is_label = [](char c) { return (c >= 'A' && c <= 'D') || (c >= 'a' && c <= 'd'); };
  if (s.size() >= 3 && s[0] == '(' && is_label(s[1]) && s[2] == ')') return text::trim(std::string_view(s).substr(3));
  if (s.size() >= 2 && is_label(s[0]) && (s[1] == '.' || s[1] == ')' || s[1] == ':')) {
    return text::trim(std::string_view(s).substr(2));
  }
  return s;
}

// ---------------------------------------------------------------------------

ChatRequest build_question_prompt(const Plot& plot, const std::vector<Conversation>& conversations,
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
  std::string prompt = templates.get("question_generation")
                           .render({{"plot_summary", plot.summary},
                                    {"scenario", plot.scenario},
                                    {"dialogues", render_dialogues(conversations)},
                                    {"target_character", character},
                                    {"previous_triples", render_previous_triples(previous_triples)}});
  return make_request(settings.model_id, std::move(prompt), settings.temperature, settings.max_output_tokens,
                      settings.seed);
}

namespace {

json parse_json_body(std::string_view raw) {
  std::string body = text::trim(text::strip_code_fence(raw));
  try {
    return json::parse(body);
  } catch (const json::exception&) {
  }
  // Prose around the object: take the outermost braces.
  auto first = body.find('{');
  auto last = body.rfind('}');
  if (first != std::string::npos && last != std::string::npos && last > first) {
    try {
      return json::parse(body.substr(first, last - first + 1));
    } catch (const json::exception&) {
    }
  }
  throw Error(ErrorCode::UnparseableResponse, "response is not a JSON object");
}

// Depth-first search for the block keyed "<Dimension> Multiple Choice Question".
const json* find_block(const json& j, Dimension d) {
  const std::string want = text::to_lower(std::string(to_string(d)) + " Multiple Choice Question");
  if (j.is_object()) {
    for (const auto& [key, value] : j.items()) {
      if (text::normalize(key) == want && value.is_object()) return &value;
    }
    for (const auto& [key, value] : j.items()) {
      if (const json* found = find_block(value, d)) return found;
    }
  } else if (j.is_array()) {
    for (const auto& v : j) {
      if (const json* found = find_block(v, d)) return found;
    }
  }
  return nullptr;
}

const json* field(const json& block, std::string_view name) {
  for (const auto& [key, value] : block.items()) {
    if (text::normalize(key) == text::normalize(name)) return &value;
  }
  return nullptr;
}

std::string string_field(const json& block, std::string_view name) {
  const json* v = field(block, name);
  if (v == nullptr || v->is_null()) return {};
  return v->is_string() ? v->get<std::string>() : v->dump();
}

char correct_letter(const json* value, const std::array<std::string, 4>& options, const std::string& where) {
  if (value == nullptr || !value->is_string()) throw Error(ErrorCode::AmbiguousCorrect, where + ": no correct answer");
  std::string s = text::trim(value->get<std::string>());
  auto letter = [](char c) -> char {
    c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return c >= 'A' && c <= 'D' ? c : '\0';
  };
  if (s.size() >= 3 && s[0] == '(' && s[2] == ')' && letter(s[1])) return letter(s[1]);
  if (!s.empty() && letter(s[0]) && (s.size() == 1 || !std::isalpha(static_cast<unsigned char>(s[1])))) {
    // "B", "B.", "B. text" but not "B and C" or "B, D"
    std::string rest = text::trim(std::string_view(s).substr(1));
    bool only_letters = true;
    int letters = 0;
    std::string tok;
    for (char c : rest + " ") {
      if (std::isalpha(static_cast<unsigned char>(c))) {
        tok.push_back(c);
        continue;
      }
      if (!tok.empty()) {
        if (tok.size() == 1 && letter(tok[0])) ++letters;
        else if (!text::iequals(tok, "and") && !text::iequals(tok, "or")) only_letters = false;
        tok.clear();
      }
    }
    if (!(only_letters && letters > 0)) return letter(s[0]);
    throw Error(ErrorCode::AmbiguousCorrect, where + ": more than one correct answer in '" + s + "'");
  }
  const std::string norm = text::normalize(strip_option_label(s));
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (!norm.empty() && text::normalize(options[i]) == norm) return static_cast<char>('A' + i);
  }
  throw Error(ErrorCode::AmbiguousCorrect, where + ": cannot read correct answer '" + s + "'");
}

TomQuestion question_from_block(const json& block, Dimension d, const std::string& where) {
  TomQuestion q;
  q.dimension = d;
  q.scenario = string_field(block, "Scenario");
  q.reasoning = string_field(block, "Reasoning");
  q.stem = string_field(block, "Question");

  const json* opts = field(block, "Options");
  std::vector<std::string> parsed;
  if (opts != nullptr && opts->is_array()) {
    for (const auto& o : *opts) parsed.push_back(strip_option_label(o.is_string() ? o.get<std::string>() : o.dump()));
  } else if (opts != nullptr && opts->is_object()) {
    for (const auto& [k, v] : opts->items()) parsed.push_back(strip_option_label(v.is_string() ? v.get<std::string>() : v.dump()));
  }
  if (parsed.size() != 4) {
    throw Error(ErrorCode::BadOptionCount,
                where + ": expected 4 options, found " + std::to_string(parsed.size()));
  }
  for (std::size_t i = 0; i < 4; ++i) q.options[i] = parsed[i];
  q.correct = correct_letter(field(block, "Correct Answer"), q.options, where);
  check_question(q);
  return q;
}

std::uint64_t id_hash(const std::string& id) {
  return std::stoull(sha256_hex(id).substr(0, 16), nullptr, 16);
}

}  // namespace

std::vector<TomQuestion> parse_question_response(std::string_view raw, const std::string& book_id, int plot_index,
                                                 const std::string& character) {
  json j = parse_json_body(raw);
  std::vector<TomQuestion> out;
  for (Dimension d : kAllDimensions) {
    const json* block = find_block(j, d);
    if (block == nullptr) {
      throw Error(ErrorCode::MissingDimension, "response has no " + std::string(to_string(d)) + " question");
    }
    TomQuestion q = question_from_block(*block, d, std::string(to_string(d)));
    q.book_id = book_id;
    q.plot_index = plot_index;
    q.character = character;
    q.id = question_id(book_id, plot_index, character, d);
    out.push_back(std::move(q));
  }
  return out;
}

TomQuestion parse_single_question(std::string_view raw, Dimension d) {
  json j = parse_json_body(raw);
  const json* block = find_block(j, d);
  if (block == nullptr && j.is_object() && field(j, "Options") != nullptr) block = &j;
  if (block == nullptr) {
    throw Error(ErrorCode::MissingDimension, "response has no " + std::string(to_string(d)) + " question");
  }
  return question_from_block(*block, d, std::string(to_string(d)));
}

void shuffle_options(TomQuestion& q, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ id_hash(q.id));
  std::array<int, 4> perm = {0, 1, 2, 3};
  for (std::size_t i = perm.size() - 1; i > 0; --i) {
    std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(perm[i], perm[j]);
  }
  std::array<std::string, 4> shuffled;
  char correct = q.correct;
  for (std::size_t i = 0; i < 4; ++i) {
    shuffled[i] = q.options[static_cast<std::size_t>(perm[i])];
    if (perm[i] == q.correct - 'A') correct = static_cast<char>('A' + i);
  }
  // Compose with any earlier permutation so the record stays relative to the
  // model's original order.
  std::array<int, 4> composed{};
  for (std::size_t i = 0; i < 4; ++i) composed[i] = q.permutation[static_cast<std::size_t>(perm[i])];
  q.options = std::move(shuffled);
  q.correct = correct;
  q.permutation = composed;
}

// ---------------------------------------------------------------------------

json VerificationVerdict::to_json() const {
  return json{{"question_id", question_id},
              {"stage", stage == VerdictStage::Llm ? "llm" : "human"},
              {"pass", pass},
              {"notes", notes}};
}

bool transition_allowed(QuestionState from, QuestionState to) {
  switch (from) {
    case QuestionState::Generated: return to == QuestionState::LlmVerified || to == QuestionState::Rejected;
    case QuestionState::LlmVerified: return to == QuestionState::HumanVerified || to == QuestionState::Rejected;
    case QuestionState::Rejected: return to == QuestionState::Generated;
    case QuestionState::HumanVerified: return false;
  }
  return false;
}

void transition(TomQuestion& q, QuestionState to) {
  if (!transition_allowed(q.state, to)) {
    throw Error(ErrorCode::IllegalTransition, q.id + ": " + std::string(to_string(q.state)) + " -> " +
                                                  std::string(to_string(to)));
  }
  if (q.state == QuestionState::Rejected) ++q.attempt;
  q.state = to;
}

ChatRequest build_verification_prompt(const TomQuestion& q, const std::string& plot_summary,
                                      const GenerationSettings& settings, const TemplateSet& templates) {
  std::string prompt = templates.get("question_verification")
                           .render({{"plot_summary", plot_summary},
                                    {"target_character", q.character},
                                    {"dimension", std::string(to_string(q.dimension))},
                                    {"stem", q.stem},
                                    {"options", q.render_options()},
                                    {"correct", std::string(1, q.correct)}});
  return make_request(settings.model_id, std::move(prompt), settings.temperature, settings.max_output_tokens,
                      settings.seed);
}

VerificationVerdict parse_verdict(std::string_view raw, const std::string& qid) {
  VerificationVerdict v;
  v.question_id = qid;
  v.stage = VerdictStage::Llm;
  try {
    json j = parse_json_body(raw);
    if (const json* verdict = j.is_object() ? field(j, "verdict") : nullptr; verdict != nullptr) {
      if (verdict->is_boolean()) {
        v.pass = verdict->get<bool>();
      } else if (verdict->is_string()) {
        v.pass = text::iequals(text::trim(verdict->get<std::string>()), "pass");
      }
      v.notes = string_field(j, "notes");
      return v;
    }
    v.notes = "verdict field missing";
  } catch (const Error&) {
    v.notes = "unreadable verdict";
  }
  v.pass = false;
  return v;
}

VerificationVerdict llm_verify(TomQuestion& q, Gateway& gateway, const std::string& plot_summary,
                               const GenerationSettings& settings, const TemplateSet& templates) {
  if (q.state != QuestionState::Generated) {
    throw Error(ErrorCode::IllegalTransition, q.id + ": only generated questions can be LLM-verified (state " +
                                                  std::string(to_string(q.state)) + ")");
  }
  ChatResponse resp = gateway.complete(build_verification_prompt(q, plot_summary, settings, templates));
  VerificationVerdict v = parse_verdict(resp.text, q.id);
  transition(q, v.pass ? QuestionState::LlmVerified : QuestionState::Rejected);
  q.notes = v.notes;
  return v;
}

ChatRequest build_regeneration_prompt(const TomQuestion& q, const std::string& generation_prompt, int max_attempts,
                                      const GenerationSettings& settings, const TemplateSet& templates) {
  if (q.state != QuestionState::Rejected) {
    throw Error(ErrorCode::IllegalTransition, q.id + ": only rejected questions can be regenerated");
  }
  if (q.attempt >= max_attempts) {
    throw Error(ErrorCode::AttemptsExhausted,
                q.id + ": " + std::to_string(q.attempt) + " of " + std::to_string(max_attempts) + " attempts used");
  }
  std::string prompt = templates.get("question_regeneration")
                           .render({{"generation_prompt", generation_prompt},
                                    {"dimension", std::string(to_string(q.dimension))},
                                    {"target_character", q.character},
                                    {"stem", q.stem},
                                    {"options", q.render_options()},
                                    {"correct", std::string(1, q.correct)},
                                    {"notes", q.notes.empty() ? std::string("(none)") : q.notes}});
  return make_request(settings.model_id, std::move(prompt), settings.temperature, settings.max_output_tokens,
                      settings.seed);
}

TomQuestion apply_regeneration(const TomQuestion& q, std::string_view response_text, std::uint64_t shuffle_seed) {
  TomQuestion fresh = parse_single_question(response_text, q.dimension);
  fresh.id = q.id;
  fresh.book_id = q.book_id;
  fresh.plot_index = q.plot_index;
  fresh.character = q.character;
  fresh.state = QuestionState::Rejected;
  fresh.attempt = q.attempt;
  transition(fresh, QuestionState::Generated);
  shuffle_options(fresh, shuffle_seed + static_cast<std::uint64_t>(fresh.attempt));
  return fresh;
}

TomQuestion regenerate(const TomQuestion& q, Gateway& gateway, const std::string& generation_prompt,
                       int max_attempts, const GenerationSettings& settings, std::uint64_t shuffle_seed,
                       const TemplateSet& templates) {
  ChatResponse resp =
      gateway.complete(build_regeneration_prompt(q, generation_prompt, max_attempts, settings, templates));
  return apply_regeneration(q, resp.text, shuffle_seed);
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& review_header() {
  static const std::vector<std::string> header = {"id",       "book_id",  "plot_index", "character", "dimension",
                                                  "stem",     "option_a", "option_b",   "option_c",  "option_d",
                                                  "correct",  "verdict",  "notes"};
  return header;
}

std::string review_csv(const std::vector<TomQuestion>& questions) {
  std::string out = csv::format_row(review_header());
  for (const auto& q : questions) {
    if (q.state != QuestionState::LlmVerified) continue;
    out += csv::format_row({q.id, q.book_id, std::to_string(q.plot_index), q.character,
                            std::string(to_string(q.dimension)), q.stem, q.options[0], q.options[1], q.options[2],
                            q.options[3], std::string(1, q.correct), "", ""});
  }
  return out;
}

std::size_t export_review(const std::vector<TomQuestion>& questions, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << review_csv(questions);
  return static_cast<std::size_t>(std::count_if(questions.begin(), questions.end(), [](const TomQuestion& q) {
    return q.state == QuestionState::LlmVerified;
  }));
}

ImportReport import_review_csv(std::string_view data, std::vector<TomQuestion>& questions) {
  std::vector<csv::ParsedRow> rows;
  try {
    rows = csv::parse(data);
  } catch (const std::runtime_error& e) {
    throw Error(ErrorCode::MalformedVerdictRow, e.what());
  }
  if (rows.empty() || rows.front().fields != review_header()) {
    throw Error(ErrorCode::MalformedVerdictRow, "review file header does not match the expected columns");
  }
  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < questions.size(); ++i) by_id[questions[i].id] = i;

  const std::size_t verdict_col = 11;
  const std::size_t notes_col = 12;
  ImportReport report;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.fields.size() == 1 && text::trim(row.fields[0]).empty()) continue;
    if (row.fields.size() != review_header().size()) {
      report.errors.push_back({row.line, ErrorCode::MalformedVerdictRow,
                               "expected " + std::to_string(review_header().size()) + " fields, found " +
                                   std::to_string(row.fields.size())});
      continue;
    }
    const std::string& id = row.fields[0];
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      report.errors.push_back({row.line, ErrorCode::UnknownQuestionId, "unknown question id '" + id + "'"});
      continue;
    }
    const std::string verdict = text::to_lower(text::trim(row.fields[verdict_col]));
    if (verdict.empty()) {
      ++report.pending;
      continue;
    }
    bool pass;
    if (verdict == "pass" || verdict == "yes" || verdict == "y") {
      pass = true;
    } else if (verdict == "fail" || verdict == "no" || verdict == "n") {
      pass = false;
    } else {
      report.errors.push_back({row.line, ErrorCode::MalformedVerdictRow, "verdict must be pass or fail, got '" +
                                                                             row.fields[verdict_col] + "'"});
      continue;
    }
    TomQuestion& q = questions[it->second];
    if (q.state != QuestionState::LlmVerified) {
      report.errors.push_back({row.line, ErrorCode::IllegalTransition,
                               id + " is " + std::string(to_string(q.state)) + ", not llm_verified"});
      continue;
    }
    transition(q, pass ? QuestionState::HumanVerified : QuestionState::Rejected);
    q.notes = row.fields[notes_col];
    report.applied.push_back({id, VerdictStage::Human, pass, row.fields[notes_col]});
  }
  return report;
}

ImportReport import_review(const std::filesystem::path& path, std::vector<TomQuestion>& questions) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return import_review_csv(ss.str(), questions);
}

// ---------------------------------------------------------------------------

std::int64_t DatasetStats::first_pass_percent_hundredths() const {
  return questions == 0 ? 0 : text::percent_hundredths(verified_first_try, questions);
}

std::string DatasetStats::render() const {
  std::ostringstream out;
  out << "Questions           " << questions << "\n"
      << "Correct Answers     " << correct_answers << "\n"
      << "Distractor Answers  " << distractors << "\n"
      << "Total Choices       " << choices << "\n";
  for (const auto& [d, n] : per_dimension) out << "  " << to_string(d) << ": " << n << "\n";
  for (const auto& [b, n] : per_book) out << "  " << b << ": " << n << "\n";
  out << "Verified            " << verified << "\n"
      << "First-pass valid    " << text::format_hundredths(first_pass_percent_hundredths()) << "%\n";
  return out.str();
}

json DatasetStats::to_json() const {
  json dims = json::object();
  for (const auto& [d, n] : per_dimension) dims[std::string(to_string(d))] = n;
  return json{{"questions", questions},
              {"correct_answers", correct_answers},
              {"distractors", distractors},
              {"choices", choices},
              {"per_dimension", std::move(dims)},
              {"per_book", per_book},
              {"verified", verified},
              {"verified_first_try", verified_first_try},
              {"first_pass_percent", text::format_hundredths(first_pass_percent_hundredths())}};
}

DatasetStats dataset_stats(const std::vector<TomQuestion>& questions) {
  DatasetStats s;
  for (Dimension d : kAllDimensions) s.per_dimension[d] = 0;
  for (const auto& q : questions) {
    ++s.questions;
    ++s.per_dimension[q.dimension];
    ++s.per_book[q.book_id];
    if (q.state == QuestionState::LlmVerified || q.state == QuestionState::HumanVerified) {
      ++s.verified;
      if (q.attempt == 1) ++s.verified_first_try;
    }
  }
  s.correct_answers = s.questions;
  s.distractors = 3 * s.questions;
  s.choices = 4 * s.questions;
  return s;
}

std::vector<std::size_t> sample_indices(std::size_t n, double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate > 1.0) throw Error(ErrorCode::ConfigInvalid, "sampling rate must lie in [0, 1]");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  const auto take = static_cast<std::size_t>(std::floor(rate * static_cast<double>(n) + 0.5));
  idx.resize(std::min(take, n));
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::string questions_to_jsonl(const std::vector<TomQuestion>& questions) {
  std::string out;
  for (const auto& q : questions) out += q.to_json().dump() + "\n";
  return out;
}

std::vector<TomQuestion> questions_from_jsonl(std::string_view data) {
  std::vector<TomQuestion> out;
  std::size_t line_no = 0;
  for (const auto& line : text::split(data, '\n')) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(TomQuestion::from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedRecord, "question line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace evolvtrip
