#include "pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "evolvtrip/csv.hpp"
#include "evolvtrip/error.hpp"
#include "evolvtrip/ftemit.hpp"
#include "evolvtrip/hashing.hpp"
#include "evolvtrip/text.hpp"

#ifndef EVOLVTRIP_VERSION
#define EVOLVTRIP_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace evolvtrip::pipeline {

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

[[noreturn]] void missing(const fs::path& p, const std::string& producer) {
  throw Error(ErrorCode::MissingUpstreamArtifact, p.string() + " not found (run `" + producer + "` first)");
}

bool backend_error(ErrorCode c) { return exit_code_for(c) == 2; }

std::vector<Conversation> conversations_with(const Plot& plot, const std::string& character) {
  std::vector<Conversation> out;
  for (const auto& c : plot.conversations) {
    auto cast = c.cast();
    if (std::find(cast.begin(), cast.end(), character) != cast.end()) out.push_back(c);
  }
  return out;
}

std::vector<json> jsonl_lines(const std::string& data, const fs::path& where) {
  std::vector<json> out;
  std::size_t n = 0;
  for (const auto& line : text::split(data, '\n')) {
    ++n;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::MalformedRecord, where.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

std::string to_jsonl(const std::vector<json>& lines) {
  std::string out;
  for (const auto& l : lines) out += l.dump() + "\n";
  return out;
}

std::string layout_ext(ReportLayout l) {
  switch (l) {
    case ReportLayout::Markdown: return "md";
    case ReportLayout::Csv: return "csv";
    default: return "txt";
  }
}

}  // namespace

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::AuthMissing:
    case ErrorCode::RateLimitedExhausted:
    case ErrorCode::TransportError:
    case ErrorCode::ScriptMiss:
    case ErrorCode::InvalidRequest:
    case ErrorCode::CorruptGraphFile:
      return 2;
    default:
      return 1;
  }
}

// ---------------------------------------------------------------------------
// Run bookkeeping: records hashed inputs/outputs, writes the manifest.
// ---------------------------------------------------------------------------

class Pipeline::Run {
 public:
  Run(Pipeline& p, std::string command) : p_(p), command_(std::move(command)) {}

  void input(const fs::path& f) { inputs_[rel(f)] = sha256_file(f); }

  void write(const fs::path& f, const std::string& data) {
    if (f.has_parent_path()) fs::create_directories(f.parent_path());
    std::ofstream out(f, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + f.string());
    out << data;
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + f.string());
    outputs_[rel(f)] = sha256_hex(data);
  }

  void output(const fs::path& f) { outputs_[rel(f)] = sha256_file(f); }

  json& flags() { return flags_; }
  json& counts() { return counts_; }

  int finish(int status) {
    json m;
    m["command"] = command_;
    m["version"] = EVOLVTRIP_VERSION;
    m["config_sha256"] = p_.config_.source_sha256;
    m["seed"] = p_.config_.seed ? json(*p_.config_.seed) : json(nullptr);
    m["flags"] = flags_;
    if (uses_backend_) {
      json b = p_.backend_.to_json();
      if (p_.backend_.kind == BackendKind::Replay) b["replay_script"] = rel(p_.backend_.replay_script);
      m["backend"] = b;
      m["cache"] = p_.gateway_ && p_.gateway_->caching();
    }
    m["template_digest"] = p_.templates_.version_digest();
    m["inputs"] = inputs_;
    m["outputs"] = outputs_;
    m["counts"] = counts_;
    m["status"] = status;
    fs::path f = p_.path("manifests/" + command_ + ".json");
    fs::create_directories(f.parent_path());
    std::ofstream out(f, std::ios::binary | std::ios::trunc);
    out << m.dump(2) << "\n";
    for (const auto& w : p_.gateway_ ? p_.gateway_->warnings() : std::vector<std::string>{}) {
      p_.log_ << "warning: " << w << "\n";
    }
    return status;
  }

  Gateway& gateway() {
    uses_backend_ = true;
    auto& g = p_.gateway();
    if (p_.backend_.kind == BackendKind::Replay) input(p_.backend_.replay_script);
    return g;
  }

 private:
  // Paths under the output root are recorded relative to it; anything else
  // relative to the config directory, so manifests do not depend on where a
  // run was written.
  std::string rel(const fs::path& f) const {
    auto abs = fs::weakly_canonical(fs::absolute(f));
    auto out = fs::weakly_canonical(fs::absolute(p_.out_));
    auto r = abs.lexically_relative(out);
    if (!r.empty() && *r.begin() != "..") return r.generic_string();
    auto base = fs::weakly_canonical(fs::absolute(p_.config_.base_dir));
    r = abs.lexically_relative(base);
    if (!r.empty()) return "$config/" + r.generic_string();
    return abs.generic_string();
  }

  Pipeline& p_;
  std::string command_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> outputs_;
  json flags_ = json::object();
  json counts_ = json::object();
  bool uses_backend_ = false;
};

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

Pipeline::Pipeline(PipelineConfig config, GlobalFlags flags, std::ostream& out, std::ostream& log)
    : config_(std::move(config)), flags_(std::move(flags)), out_stream_(out), log_(log) {
  out_ = flags_.out_dir ? *flags_.out_dir : config_.resolve(config_.output_dir);
  for (const auto& [name, p] : config_.templates) templates_.override_with(name, config_.resolve(p));
  if (flags_.backend) {
    config_.backend = *flags_.backend;
    config_.validate();
  }
  backend_ = config_.active_backend();
  if (flags_.replay) {
    backend_.kind = BackendKind::Replay;
    backend_.id = "replay";
    backend_.replay_script = *flags_.replay;
  } else if (backend_.kind == BackendKind::Replay) {
    backend_.replay_script = config_.resolve(backend_.replay_script);
  }
}

Pipeline::~Pipeline() = default;

Gateway& Pipeline::gateway() {
  if (!gateway_) {
    std::optional<fs::path> cache;
    if (flags_.cache_dir) {
      cache = *flags_.cache_dir;
    } else if (config_.cache_dir) {
      cache = config_.resolve(*config_.cache_dir);
    }
    gateway_ = std::make_unique<Gateway>(make_backend(backend_), backend_, cache);
  }
  return *gateway_;
}

std::map<std::string, CharacterRegistry> Pipeline::load_aliases() const {
  if (!config_.corpus.aliases) return {};
  return load_alias_table(config_.resolve(*config_.corpus.aliases));
}

CharacterRegistry Pipeline::registry_for(const Book& book) const {
  auto table = load_aliases();
  CharacterRegistry reg;
  if (auto it = table.find(book.id); it != table.end()) reg = it->second;
  for (const auto& plot : book.plots) {
    for (const auto& s : plot.speakers()) {
      if (!reg.contains(s)) reg.add_canonical(s);
    }
  }
  return reg;
}

std::vector<std::string> Pipeline::characters_for(const Book& book) const {
  std::set<std::string> speakers;
  for (const auto& plot : book.plots) {
    for (const auto& s : plot.speakers()) speakers.insert(s);
  }
  if (config_.characters.empty()) return {speakers.begin(), speakers.end()};
  auto reg = registry_for(book);
  std::set<std::string> wanted;
  for (const auto& c : config_.characters) {
    auto canon = reg.lookup(c);
    if (canon && speakers.count(*canon)) wanted.insert(*canon);
  }
  return {wanted.begin(), wanted.end()};
}

Corpus Pipeline::load_corpus(Run& run) const {
  fs::path dir = path("corpus");
  if (!fs::is_directory(dir)) missing(dir, "ingest");
  IngestOptions opts;
  opts.format = CorpusFormat::NormalizedJsonl;
  Corpus corpus = ingest_corpus(dir, opts);
  for (const auto& b : corpus.books) run.input(dir / (b.id + ".jsonl"));
  return corpus;
}

std::map<std::string, TemporalKG> Pipeline::load_kgs(const Corpus& corpus, Run& run) const {
  std::map<std::string, TemporalKG> out;
  for (const auto& b : corpus.books) {
    fs::path f = path("kg/" + b.id + ".kg.jsonl");
    if (!fs::exists(f)) missing(f, "build-kg");
    run.input(f);
    out.emplace(b.id, load_kg(f));
  }
  return out;
}

std::vector<TomQuestion> Pipeline::load_questions(Run& run) const {
  fs::path f = path("questions/questions.jsonl");
  if (!fs::exists(f)) missing(f, "genqa");
  run.input(f);
  return questions_from_jsonl(read_file(f));
}

void Pipeline::save_questions(const std::vector<TomQuestion>& questions, Run& run) const {
  run.write(path("questions/questions.jsonl"), questions_to_jsonl(questions));
}

ChatRequest Pipeline::generation_prompt(const Book& book, const Plot& plot, const std::string& character,
                                        const TemporalKG* kg) const {
  (void)book;
  std::vector<MentalStateTriple> previous;
  if (kg && plot.index > 1 && kg->has_character(character)) previous = kg->state_at(character, plot.index - 1);
  return build_question_prompt(plot, conversations_with(plot, character), character, previous,
                               config_.generation.model, templates_);
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

int Pipeline::ingest() {
  Run run(*this, "ingest");
  fs::path src = config_.resolve(config_.corpus.path);
  auto aliases = load_aliases();
  IngestOptions opts;
  opts.format = config_.corpus.format;
  opts.adapter = config_.corpus.adapter;
  opts.only_books = config_.corpus.books;
  opts.aliases = aliases.empty() ? nullptr : &aliases;
  opts.threads = config_.corpus.threads;
  Corpus corpus = ingest_corpus(src, opts);
  if (fs::is_regular_file(src)) {
    run.input(src);
  } else {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(src)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) run.input(f);
  }
  if (config_.corpus.aliases) run.input(config_.resolve(*config_.corpus.aliases));

  fs::path dir = path("corpus");
  write_corpus(corpus, dir);
  std::size_t plots = 0;
  for (const auto& b : corpus.books) {
    run.output(dir / (b.id + ".jsonl"));
    plots += b.plots.size();
  }
  for (const auto& w : corpus.warnings) log_ << "warning: " << w << "\n";
  run.counts() = {{"books", corpus.books.size()}, {"plots", plots}, {"warnings", corpus.warnings.size()}};
  log_ << "ingested " << corpus.books.size() << " book(s), " << plots << " plot(s)\n";
  return run.finish(0);
}

// ---------------------------------------------------------------------------
// extract / build-kg
// ---------------------------------------------------------------------------

int Pipeline::extract() {
  Run run(*this, "extract");
  Corpus corpus = load_corpus(run);
  Gateway& gw = run.gateway();
  run.flags()["strict_perspective"] = config_.extraction.strict_perspective;
  run.flags()["merge"] = config_.merge.to_json();

  bool backend_failed = false;
  std::size_t accepted_total = 0, rejected_total = 0;
  for (const auto& book : corpus.books) {
    auto registry = registry_for(book);
    auto characters = characters_for(book);
    TemporalKG kg(book.id, static_cast<int>(book.plots.size()));
    for (const auto& c : characters) kg.register_character(c);
    std::vector<json> accepted, rejects;

    for (const auto& plot : book.plots) {
      std::vector<std::string> present;
      std::vector<ChatRequest> requests;
      for (const auto& c : characters) {
        if (!plot.has_speaker(c)) continue;
        std::vector<MentalStateTriple> previous;
        if (plot.index > 1) previous = kg.state_at(c, plot.index - 1);
        present.push_back(c);
        requests.push_back(build_extraction_prompt(plot, conversations_with(plot, c), c, previous,
                                                   config_.extraction.model, templates_));
      }
      auto outcomes = gw.run_batch(requests);

      for (std::size_t k = 0; k < present.size(); ++k) {
        const std::string& c = present[k];
        json where = {{"book_id", book.id}, {"plot_index", plot.index}, {"character", c}};
        auto reject = [&](ErrorCode code, const std::string& detail, const std::string& entry) {
          json r = where;
          r["reason"] = std::string(to_string(code));
          r["detail"] = detail;
          if (!entry.empty()) r["entry"] = entry;
          rejects.push_back(std::move(r));
        };
        if (!outcomes[k].ok()) {
          backend_failed = backend_failed || backend_error(*outcomes[k].error);
          reject(*outcomes[k].error, outcomes[k].error_message, "");
          json& r = rejects.back();
          r["backend"] = true;
          log_ << "error: " << book.id << " plot " << plot.index << " " << c << ": " << outcomes[k].error_message
               << "\n";
          continue;
        }
        TripleParse parsed;
        try {
          parsed = parse_triple_response(outcomes[k].response->text, plot.index);
        } catch (const Error& e) {
          reject(e.code(), e.detail(), "");
          continue;
        }
        for (const auto& m : parsed.malformed) reject(ErrorCode::MalformedRecord, m.reason, m.entry);
        for (const auto& m : parsed.unknown_predicate) reject(ErrorCode::UnknownPredicate, m.reason, m.entry);

        const auto cast = visible_cast(plot, c);
        std::vector<MentalStateTriple> batch;
        for (auto t : parsed.triples) {
          if (text::normalize(t.subject) != text::normalize(c)) {
            std::optional<std::string> canon;
            try {
              canon = registry.lookup(t.subject);
            } catch (const Error& e) {
              reject(e.code(), e.detail(), t.render());
              continue;
            }
            if (!canon || *canon != c) {
              reject(ErrorCode::ForeignSubject, "subject '" + t.subject + "' is not " + c, t.render());
              continue;
            }
          }
          t.subject = c;
          auto violations = validate_triple(t, c, cast, &registry);
          if (config_.extraction.strict_perspective) {
            auto it = std::find_if(violations.begin(), violations.end(), [](Violation v) {
              return v == Violation::PronounInObject || v == Violation::UnknownTarget;
            });
            if (it != violations.end()) {
              reject(ErrorCode::MalformedRecord, std::string(to_string(*it)), t.render());
              continue;
            }
          }
          t.id = book.id + ":" + std::to_string(plot.index) + ":" + text::slugify(c) + ":" +
                 std::to_string(batch.size() + 1);
          json line = t.to_json();
          line["book_id"] = book.id;
          json vs = json::array();
          for (auto v : violations) vs.push_back(std::string(to_string(v)));
          line["violations"] = vs;
          accepted.push_back(std::move(line));
          batch.push_back(std::move(t));
        }
        kg.insert_batch(make_batch(c, plot.index, std::move(batch)), config_.merge);
      }
    }
    run.write(path("triples/" + book.id + ".triples.jsonl"), to_jsonl(accepted));
    run.write(path("triples/" + book.id + ".rejects.jsonl"), to_jsonl(rejects));
    accepted_total += accepted.size();
    rejected_total += rejects.size();
  }
  run.counts() = {{"accepted", accepted_total}, {"rejected", rejected_total}};
  log_ << "extracted " << accepted_total << " triple(s), " << rejected_total << " reject(s)\n";
  return run.finish(backend_failed ? 2 : 0);
}

int Pipeline::build_kg() {
  Run run(*this, "build-kg");
  Corpus corpus = load_corpus(run);
  run.flags()["merge"] = config_.merge.to_json();
  std::size_t edges = 0, links = 0;
  int status = 0;
  for (const auto& book : corpus.books) {
    fs::path tf = path("triples/" + book.id + ".triples.jsonl");
    fs::path rf = path("triples/" + book.id + ".rejects.jsonl");
    if (!fs::exists(tf)) missing(tf, "extract");
    run.input(tf);

    std::map<std::pair<int, std::string>, std::vector<MentalStateTriple>> grouped;
    for (const auto& line : jsonl_lines(read_file(tf), tf)) {
      auto t = MentalStateTriple::from_json(line);
      grouped[{t.plot_index, t.subject}].push_back(std::move(t));
    }
    // Requests the backend never answered produced no batch during extraction.
    std::set<std::pair<int, std::string>> failed;
    if (fs::exists(rf)) {
      run.input(rf);
      for (const auto& line : jsonl_lines(read_file(rf), rf)) {
        if (line.value("backend", false)) failed.insert({line.at("plot_index").get<int>(), line.at("character")});
      }
    }

    auto characters = characters_for(book);
    TemporalKG kg(book.id, static_cast<int>(book.plots.size()));
    for (const auto& c : characters) kg.register_character(c);
    for (const auto& plot : book.plots) {
      for (const auto& c : characters) {
        if (!plot.has_speaker(c) || failed.count({plot.index, c})) continue;
        auto it = grouped.find({plot.index, c});
        std::vector<MentalStateTriple> batch;
        if (it != grouped.end()) batch = std::move(it->second);
        kg.insert_batch(make_batch(c, plot.index, std::move(batch)), config_.merge);
      }
    }
    for (const auto& [key, rest] : grouped) {
      if (!rest.empty()) {
        log_ << "warning: " << rest.size() << " triple(s) for " << key.second << " at plot " << key.first
             << " have no batch in " << book.id << "\n";
      }
    }
    auto problems = kg.check_invariants();
    for (const auto& p : problems) log_ << "error: " << book.id << ": " << p << "\n";
    if (!problems.empty()) status = 1;

    run.write(path("kg/" + book.id + ".kg.jsonl"), save_kg_to_string(kg));
    run.write(path("kg/" + book.id + ".edges.tsv"), export_edge_list(kg));
    edges += kg.edges().size();
    links += kg.links().size();
  }
  run.counts() = {{"edges", edges}, {"links", links}};
  log_ << "built graphs: " << edges << " edge(s), " << links << " supersession link(s)\n";
  return run.finish(status);
}

// ---------------------------------------------------------------------------
// genqa / verify
// ---------------------------------------------------------------------------

int Pipeline::genqa() {
  Run run(*this, "genqa");
  Corpus corpus = load_corpus(run);
  auto kgs = load_kgs(corpus, run);
  Gateway& gw = run.gateway();
  run.flags()["shuffle_options"] = config_.generation.shuffle_options;

  std::vector<TomQuestion> questions;
  std::vector<json> errors;
  bool backend_failed = false;
  for (const auto& book : corpus.books) {
    const TemporalKG& kg = kgs.at(book.id);
    auto characters = characters_for(book);
    std::vector<std::pair<int, std::string>> keys;
    std::vector<ChatRequest> requests;
    for (const auto& plot : book.plots) {
      for (const auto& c : characters) {
        if (!plot.has_speaker(c)) continue;
        keys.emplace_back(plot.index, c);
        requests.push_back(generation_prompt(book, plot, c, &kg));
      }
    }
    auto outcomes = gw.run_batch(requests);
    for (std::size_t k = 0; k < keys.size(); ++k) {
      json where = {{"book_id", book.id}, {"plot_index", keys[k].first}, {"character", keys[k].second}};
      if (!outcomes[k].ok()) {
        backend_failed = backend_failed || backend_error(*outcomes[k].error);
        where["reason"] = std::string(to_string(*outcomes[k].error));
        where["detail"] = outcomes[k].error_message;
        errors.push_back(where);
        continue;
      }
      try {
        auto qs = parse_question_response(outcomes[k].response->text, book.id, keys[k].first, keys[k].second);
        for (auto& q : qs) {
          if (config_.generation.shuffle_options) shuffle_options(q, config_.seed.value_or(0));
          questions.push_back(std::move(q));
        }
      } catch (const Error& e) {
        where["reason"] = std::string(to_string(e.code()));
        where["detail"] = e.detail();
        errors.push_back(where);
      }
    }
  }
  save_questions(questions, run);
  run.write(path("questions/errors.jsonl"), to_jsonl(errors));
  run.counts() = {{"questions", questions.size()}, {"errors", errors.size()}};
  log_ << "generated " << questions.size() << " question(s), " << errors.size() << " error(s)\n";
  return run.finish(backend_failed ? 2 : 0);
}

int Pipeline::verify() {
  Run run(*this, "verify");
  Corpus corpus = load_corpus(run);
  auto kgs = load_kgs(corpus, run);
  auto questions = load_questions(run);
  Gateway& gw = run.gateway();
  const auto& vc = config_.verification;
  run.flags()["question_sample_rate"] = vc.question_sample_rate;
  run.flags()["max_attempts"] = config_.generation.max_attempts;

  std::vector<std::size_t> fresh;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    if (questions[i].state == QuestionState::Generated) fresh.push_back(i);
  }
  std::vector<std::size_t> pending;
  for (auto k : sample_indices(fresh.size(), vc.question_sample_rate, config_.seed.value_or(0))) {
    pending.push_back(fresh[k]);
  }

  auto plot_of = [&](const TomQuestion& q) -> const Plot& {
    const Plot* p = corpus.find_plot(q.book_id, q.plot_index);
    if (!p) throw Error(ErrorCode::MissingPlot, q.id + ": plot not in corpus");
    return *p;
  };

  std::vector<json> verdicts, errors;
  bool backend_failed = false;
  for (int round = 1; !pending.empty(); ++round) {
    std::vector<ChatRequest> requests;
    for (auto i : pending) {
      requests.push_back(build_verification_prompt(questions[i], plot_of(questions[i]).summary, vc.model, templates_));
    }
    auto outcomes = gw.run_batch(requests);
    std::vector<std::size_t> rejected;
    for (std::size_t k = 0; k < pending.size(); ++k) {
      TomQuestion& q = questions[pending[k]];
      if (!outcomes[k].ok()) {
        backend_failed = backend_failed || backend_error(*outcomes[k].error);
        errors.push_back({{"question_id", q.id}, {"reason", std::string(to_string(*outcomes[k].error))},
                          {"detail", outcomes[k].error_message}});
        continue;
      }
      auto v = parse_verdict(outcomes[k].response->text, q.id);
      transition(q, v.pass ? QuestionState::LlmVerified : QuestionState::Rejected);
      if (!v.pass) q.notes = v.notes;
      json line = v.to_json();
      line["attempt"] = q.attempt;
      line["round"] = round;
      verdicts.push_back(std::move(line));
      if (!v.pass && q.attempt < config_.generation.max_attempts) rejected.push_back(pending[k]);
    }
    pending.clear();
    if (rejected.empty()) break;

    requests.clear();
    for (auto i : rejected) {
      const TomQuestion& q = questions[i];
      const Book* book = corpus.find_book(q.book_id);
      auto gen = generation_prompt(*book, plot_of(q), q.character, &kgs.at(q.book_id));
      requests.push_back(build_regeneration_prompt(q, gen.prompt_text(), config_.generation.max_attempts,
                                                   config_.generation.model, templates_));
    }
    outcomes = gw.run_batch(requests);
    for (std::size_t k = 0; k < rejected.size(); ++k) {
      TomQuestion& q = questions[rejected[k]];
      if (!outcomes[k].ok()) {
        backend_failed = backend_failed || backend_error(*outcomes[k].error);
        errors.push_back({{"question_id", q.id}, {"reason", std::string(to_string(*outcomes[k].error))},
                          {"detail", outcomes[k].error_message}});
        continue;
      }
      try {
        q = apply_regeneration(q, outcomes[k].response->text, config_.seed.value_or(0));
        pending.push_back(rejected[k]);
      } catch (const Error& e) {
        errors.push_back({{"question_id", q.id}, {"reason", std::string(to_string(e.code()))}, {"detail", e.detail()}});
      }
    }
  }

  save_questions(questions, run);
  run.write(path("verify/verdicts.jsonl"), to_jsonl(verdicts));
  run.write(path("verify/errors.jsonl"), to_jsonl(errors));
  auto stats = dataset_stats(questions);
  run.counts() = {{"verdicts", verdicts.size()}, {"errors", errors.size()}, {"verified", stats.verified}};
  log_ << "verified " << stats.verified << " of " << stats.questions << " question(s) ("
       << text::format_hundredths(stats.first_pass_percent_hundredths()) << "% on the first attempt)\n";
  return run.finish(backend_failed ? 2 : 0);
}

// ---------------------------------------------------------------------------
// review
// ---------------------------------------------------------------------------

int Pipeline::review_export() {
  Run run(*this, "review-export");
  auto questions = load_questions(run);
  run.write(path("review/questions_review.csv"), review_csv(questions));

  std::vector<json> triples;
  fs::path dir = path("triples");
  if (fs::is_directory(dir)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.path().filename().string().size() > 16 &&
          e.path().filename().string().ends_with(".triples.jsonl")) {
        files.push_back(e.path());
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      run.input(f);
      for (auto& l : jsonl_lines(read_file(f), f)) triples.push_back(std::move(l));
    }
  }
  std::string csv_out = csv::format_row(
      {"id", "book_id", "plot_index", "subject", "predicate", "object", "violations", "verdict", "notes"});
  auto picked = sample_indices(triples.size(), config_.verification.triple_sample_rate, config_.seed.value_or(0));
  for (auto i : picked) {
    const json& t = triples[i];
    std::vector<std::string> vs;
    for (const auto& v : t.value("violations", json::array())) vs.push_back(v.get<std::string>());
    csv_out += csv::format_row({t.at("id"), t.value("book_id", ""), std::to_string(t.at("plot_index").get<int>()),
                                t.at("subject"), t.at("predicate"), t.at("object"), text::join(vs, ";"), "", ""});
  }
  run.write(path("review/triples_review.csv"), csv_out);
  std::size_t rows = 0;
  for (const auto& q : questions) rows += q.state == QuestionState::LlmVerified;
  run.flags()["triple_sample_rate"] = config_.verification.triple_sample_rate;
  run.counts() = {{"question_rows", rows}, {"triple_rows", picked.size()}};
  log_ << "exported " << rows << " question(s) and " << picked.size() << " triple(s) for review\n";
  return run.finish(0);
}

int Pipeline::review_import(const fs::path& file) {
  Run run(*this, "review-import");
  auto questions = load_questions(run);
  if (!fs::exists(file)) throw Error(ErrorCode::IoError, file.string() + " does not exist");
  run.input(file);
  auto report = import_review(file, questions);
  save_questions(questions, run);

  json errs = json::array();
  for (const auto& e : report.errors) {
    errs.push_back({{"line", e.line}, {"reason", std::string(to_string(e.code))}, {"detail", e.message}});
    log_ << "error: line " << e.line << ": " << e.message << "\n";
  }
  json out = {{"applied", report.applied.size()}, {"pending", report.pending}, {"errors", errs}};
  run.write(path("review/import_report.json"), out.dump(2) + "\n");
  run.counts() = {{"applied", report.applied.size()}, {"pending", report.pending}, {"errors", report.errors.size()}};
  log_ << "applied " << report.applied.size() << " verdict(s), " << report.pending << " pending, "
       << report.errors.size() << " bad row(s)\n";
  return run.finish(report.errors.empty() ? 0 : 1);
}

// ---------------------------------------------------------------------------
// eval / report
// ---------------------------------------------------------------------------

int Pipeline::eval(const EvalFlags& f) {
  Run run(*this, "eval");
  std::vector<EvalCondition> conditions = config_.eval.conditions;
  if (!f.conditions.empty()) {
    conditions.clear();
    for (const auto& l : f.conditions) conditions.push_back(EvalCondition::from_label(l));
  } else if (f.context || f.triples) {
    std::string ctx = f.context.value_or("both");
    TripleToggle tt = triple_toggle_from_string(f.triples.value_or("both"));
    if (ctx != "both") context_mode_from_string(ctx);
    conditions.clear();
    for (const auto& c : all_conditions()) {
      bool ctx_ok = ctx == "both" || c.context == context_mode_from_string(ctx);
      bool tri_ok = tt == TripleToggle::Both || c.triples == (tt == TripleToggle::On);
      if (ctx_ok && tri_ok) conditions.push_back(c);
    }
  }
  std::sort(conditions.begin(), conditions.end());
  conditions.erase(std::unique(conditions.begin(), conditions.end()), conditions.end());

  std::vector<GenerationSettings> models = config_.eval.models;
  if (!f.models.empty()) {
    models.clear();
    for (const auto& id : f.models) {
      auto it = std::find_if(config_.eval.models.begin(), config_.eval.models.end(),
                             [&](const GenerationSettings& s) { return s.model_id == id; });
      GenerationSettings s;
      s.model_id = id;
      models.push_back(it != config_.eval.models.end() ? *it : s);
    }
  }
  ReportLayout layout = f.layout ? report_layout_from_string(*f.layout) : config_.eval.layout;

  json cond_labels = json::array();
  for (const auto& c : conditions) cond_labels.push_back(c.label());
  json model_ids = json::array();
  for (const auto& m : models) model_ids.push_back(m.to_json());
  run.flags()["conditions"] = cond_labels;
  run.flags()["models"] = model_ids;
  run.flags()["variant"] = std::string(to_string(config_.eval.variant));

  Corpus corpus = load_corpus(run);
  auto questions = load_questions(run);
  bool need_kg = std::any_of(conditions.begin(), conditions.end(), [](const auto& c) { return c.triples; });
  std::map<std::string, TemporalKG> kgs;
  if (need_kg) kgs = load_kgs(corpus, run);
  KgIndex index;
  for (const auto& [id, kg] : kgs) index[id] = &kg;

  std::vector<TomQuestion> selected;
  for (const auto& q : questions) {
    if (config_.eval.question_states.count(q.state)) selected.push_back(q);
  }
  Gateway& gw = run.gateway();
  auto result = run_eval(corpus, index, selected, models, conditions, gw,
                         ContextOptions{config_.eval.variant, config_.eval.summary_window}, templates_);

  bool backend_failed = false;
  for (const auto& p : result.predictions) {
    if (!p.error.empty()) backend_failed = true;
  }
  for (const auto& e : result.errors) log_ << "error: " << e << "\n";
  run.write(path("eval/predictions.jsonl"), predictions_to_jsonl(result.predictions));
  run.write(path("eval/scores.json"), result.table.to_json().dump(2) + "\n");
  std::string rendered = render_report(result.table, layout);
  run.write(path("eval/report." + layout_ext(layout)), rendered);
  out_stream_ << rendered;
  run.counts() = {{"questions", selected.size()}, {"predictions", result.predictions.size()},
                  {"errors", result.errors.size()}};
  return run.finish(backend_failed ? 2 : 0);
}

int Pipeline::report(const std::optional<std::string>& layout_flag) {
  Run run(*this, "report");
  fs::path f = path("eval/scores.json");
  if (!fs::exists(f)) missing(f, "eval");
  run.input(f);
  ScoreTable table;
  try {
    table = ScoreTable::from_json(json::parse(read_file(f)));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, f.string() + ": " + e.what());
  }
  ReportLayout layout = layout_flag ? report_layout_from_string(*layout_flag) : config_.eval.layout;
  run.flags()["layout"] = layout_ext(layout);
  std::string rendered = render_report(table, layout);
  run.write(path("eval/report." + layout_ext(layout)), rendered);
  out_stream_ << rendered;
  return run.finish(0);
}

// ---------------------------------------------------------------------------
// emit-ft / stats
// ---------------------------------------------------------------------------

int Pipeline::emit_ft() {
  Run run(*this, "emit-ft");
  const auto& fc = config_.finetune;
  Corpus corpus = load_corpus(run);
  auto questions = load_questions(run);
  std::vector<bool> toggles;
  if (fc.with_triples != TripleToggle::Off) toggles.push_back(true);
  if (fc.with_triples != TripleToggle::On) toggles.push_back(false);
  std::map<std::string, TemporalKG> kgs;
  if (fc.with_triples != TripleToggle::Off) kgs = load_kgs(corpus, run);
  KgIndex index;
  for (const auto& [id, kg] : kgs) index[id] = &kg;

  json ood = json::array();
  for (const auto& b : fc.ood_books) ood.push_back(b);
  run.flags()["ood_books"] = ood;
  run.flags()["context"] = std::string(to_string(fc.context));
  run.flags()["waive_verification"] = fc.waive_verification;

  auto split = split_ood(corpus, questions, SplitSpec{fc.ood_books});
  EmitOptions opts{fc.context, fc.waive_verification};
  std::set<std::string> skipped;
  json counts = json::object();
  for (Split s : {Split::Train, Split::OodTest}) {
    const auto& qs = s == Split::Train ? split.train : split.ood;
    for (bool with : toggles) {
      std::vector<TrainingExample> examples;
      for (const auto& q : qs) {
        if (!fc.waive_verification && q.state != QuestionState::HumanVerified) {
          skipped.insert(q.id);
          continue;
        }
        auto ex = emit_example(q, corpus, index, with, opts, templates_);
        ex.split = s;
        examples.push_back(std::move(ex));
      }
      std::string name = std::string(s == Split::Train ? "train" : "ood") + (with ? "_with" : "_without") + "_triples";
      run.write(path("finetune/" + name + ".jsonl"), training_jsonl(examples));
      counts[name] = examples.size();
    }
  }
  run.write(path("finetune/split_manifest.json"), split_manifest(corpus, split).dump(2) + "\n");
  counts["skipped_unverified"] = skipped.size();
  run.counts() = counts;
  out_stream_ << split.render();
  if (!skipped.empty()) log_ << "skipped " << skipped.size() << " question(s) without human verification\n";
  return run.finish(0);
}

int Pipeline::stats(const std::optional<fs::path>& source) {
  Run run(*this, "stats");
  auto aliases = load_aliases();
  Corpus corpus;
  if (source) {
    IngestOptions opts;
    opts.format = config_.corpus.format;
    opts.adapter = config_.corpus.adapter;
    opts.only_books = config_.corpus.books;
    opts.aliases = aliases.empty() ? nullptr : &aliases;
    opts.threads = config_.corpus.threads;
    corpus = ingest_corpus(*source, opts);
    run.flags()["source"] = true;
  } else {
    corpus = load_corpus(run);
  }
  auto report = corpus_stats(corpus, aliases.empty() ? nullptr : &aliases);
  run.write(path("stats/corpus_stats.json"), report.to_json().dump(2) + "\n");
  out_stream_ << report.render();
  fs::path qf = path("questions/questions.jsonl");
  if (fs::exists(qf)) {
    auto ds = dataset_stats(load_questions(run));
    run.write(path("stats/dataset_stats.json"), ds.to_json().dump(2) + "\n");
    out_stream_ << ds.render();
  }
  return run.finish(0);
}

}  // namespace evolvtrip::pipeline
