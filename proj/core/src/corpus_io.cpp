#include <algorithm>
#include <fstream>
#include <future>
#include <sstream>

#include "evolvtrip/corpus.hpp"
#include "evolvtrip/error.hpp"
#include "evolvtrip/text.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace evolvtrip {

CorpusFormat corpus_format_from_string(std::string_view s) {
  if (text::iequals(s, "coser-json") || text::iequals(s, "coser") || text::iequals(s, "json")) {
    return CorpusFormat::CoserJson;
  }
  if (text::iequals(s, "normalized-jsonl") || text::iequals(s, "jsonl")) return CorpusFormat::NormalizedJsonl;
  throw Error(ErrorCode::ConfigInvalid, "unsupported corpus format '" + std::string(s) + "'");
}

std::string_view to_string(CorpusFormat format) {
  return format == CorpusFormat::CoserJson ? "coser-json" : "normalized-jsonl";
}

SourceAdapter SourceAdapter::coser() { return SourceAdapter{}; }

SourceAdapter SourceAdapter::from_json(const json& j) {
  SourceAdapter a = coser();
  static const std::vector<std::pair<const char*, std::string SourceAdapter::*>> kFields = {
      {"title", &SourceAdapter::title},
      {"title_fallback", &SourceAdapter::title_fallback},
      {"plots", &SourceAdapter::plots},
      {"summary", &SourceAdapter::summary},
      {"plot_scenario", &SourceAdapter::plot_scenario},
      {"conversations", &SourceAdapter::conversations},
      {"conversation_scenario", &SourceAdapter::conversation_scenario},
      {"environment", &SourceAdapter::environment},
      {"dialogues", &SourceAdapter::dialogues},
      {"speaker", &SourceAdapter::speaker},
      {"message", &SourceAdapter::message},
      {"environment_speaker", &SourceAdapter::environment_speaker},
  };
  if (!j.is_object()) throw Error(ErrorCode::ConfigInvalid, "corpus adapter must be an object");
  for (const auto& [key, value] : j.items()) {
    auto it = std::find_if(kFields.begin(), kFields.end(), [&](const auto& f) { return key == f.first; });
    if (it == kFields.end()) throw Error(ErrorCode::ConfigInvalid, "unknown corpus adapter key '" + key + "'");
    if (!value.is_string()) throw Error(ErrorCode::ConfigInvalid, "corpus adapter key '" + key + "' must be a string");
    a.*(it->second) = value.get<std::string>();
  }
  return a;
}

json SourceAdapter::to_json() const {
  return json{{"title", title},
              {"title_fallback", title_fallback},
              {"plots", plots},
              {"summary", summary},
              {"plot_scenario", plot_scenario},
              {"conversations", conversations},
              {"conversation_scenario", conversation_scenario},
              {"environment", environment},
              {"dialogues", dialogues},
              {"speaker", speaker},
              {"message", message},
              {"environment_speaker", environment_speaker}};
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::UnreadableSource, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string string_field(const json& obj, const std::string& key) {
  if (key.empty() || !obj.is_object()) return {};
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (it->is_string()) return it->get<std::string>();
  return it->dump();
}

Turn turn_from_parts(const std::string& speaker, const std::string& message, std::vector<std::string>* warnings,
                     const std::string& rec) {
  Turn t;
  t.speaker = text::trim(speaker);
  std::vector<std::string> local;
  t.segments = segment_utterance(message, &local);
  if (warnings) {
    for (auto& w : local) warnings->push_back(rec + " " + t.speaker + ": " + w);
  }
  return t;
}

}  // namespace

Book book_from_source(const json& doc, const std::string& book_id, const SourceAdapter& a,
                      std::vector<std::string>* warnings) {
  if (!doc.is_object()) throw Error(ErrorCode::MalformedRecord, book_id + ": book document is not a JSON object");
  Book book;
  book.id = book_id;
  book.title = string_field(doc, a.title);
  if (book.title.empty()) book.title = string_field(doc, a.title_fallback);
  if (book.title.empty()) book.title = book_id;

  auto plots_it = doc.find(a.plots);
  if (plots_it == doc.end() || !plots_it->is_array()) {
    throw Error(ErrorCode::MalformedRecord, book_id + ": missing '" + a.plots + "' array");
  }
  int index = 0;
  for (const auto& p : *plots_it) {
    ++index;
    const std::string rec = book_id + "#plot" + std::to_string(index);
    if (!p.is_object()) throw Error(ErrorCode::MalformedRecord, rec + ": plot is not an object");
    Plot plot;
    plot.book_id = book_id;
    plot.index = index;
    plot.summary = text::trim(string_field(p, a.summary));
    plot.scenario = text::trim(string_field(p, a.plot_scenario));

    auto convs = p.find(a.conversations);
    if (convs != p.end() && !convs->is_array()) {
      throw Error(ErrorCode::MalformedRecord, rec + ": '" + a.conversations + "' is not an array");
    }
    if (convs != p.end()) {
      int cidx = 0;
      for (const auto& c : *convs) {
        ++cidx;
        const std::string crec = rec + "#conv" + std::to_string(cidx);
        if (!c.is_object()) throw Error(ErrorCode::MalformedRecord, crec + ": conversation is not an object");
        Conversation conv;
        conv.book_id = book_id;
        conv.plot_index = index;
        conv.environment = text::trim(string_field(c, a.environment));
        if (plot.scenario.empty()) plot.scenario = text::trim(string_field(c, a.conversation_scenario));

        auto dialogues = c.find(a.dialogues);
        if (dialogues == c.end() || !dialogues->is_array()) {
          throw Error(ErrorCode::MalformedRecord, crec + ": missing '" + a.dialogues + "' array");
        }
        for (const auto& d : *dialogues) {
          Turn t;
          if (d.is_string()) {
            ParsedTurn parsed;
            try {
              parsed = parse_turn(d.get<std::string>());
            } catch (const Error& e) {
              throw Error(ErrorCode::MalformedRecord, crec + ": " + e.detail());
            }
            if (warnings) {
              for (auto& w : parsed.warnings) warnings->push_back(crec + " " + parsed.turn.speaker + ": " + w);
            }
            t = std::move(parsed.turn);
            if (text::iequals(t.speaker, a.environment_speaker)) {
              std::string env = text::trim(t.utterance());
              if (!env.empty()) conv.environment += (conv.environment.empty() ? "" : "\n") + env;
              continue;
            }
          } else if (d.is_object()) {
            std::string speaker = string_field(d, a.speaker);
            std::string message = string_field(d, a.message);
            if (text::trim(speaker).empty()) {
              throw Error(ErrorCode::MalformedRecord, crec + ": dialogue entry without '" + a.speaker + "'");
            }
            if (text::iequals(text::trim(speaker), a.environment_speaker)) {
              std::string env = text::trim(message);
              if (!env.empty()) conv.environment += (conv.environment.empty() ? "" : "\n") + env;
              continue;
            }
            t = turn_from_parts(speaker, message, warnings, crec);
          } else {
            throw Error(ErrorCode::MalformedRecord, crec + ": dialogue entry must be a string or object");
          }
          if (t.segments.empty()) {
            throw Error(ErrorCode::MalformedRecord, crec + ": empty utterance for " + t.speaker);
          }
          conv.turns.push_back(std::move(t));
        }
        plot.conversations.push_back(std::move(conv));
      }
    }
    book.plots.push_back(std::move(plot));
  }
  validate_book(book);
  return book;
}

// ---------------------------------------------------------------------------
// Normalized JSONL
// ---------------------------------------------------------------------------

json plot_to_json(const Plot& plot, const std::string& book_title) {
  json convs = json::array();
  for (const auto& c : plot.conversations) {
    json turns = json::array();
    for (const auto& t : c.turns) {
      json segs = json::array();
      for (const auto& s : t.segments) segs.push_back({{"kind", to_string(s.kind)}, {"text", s.text}});
      turns.push_back({{"speaker", t.speaker}, {"segments", std::move(segs)}});
    }
    convs.push_back({{"environment", c.environment}, {"turns", std::move(turns)}});
  }
  return json{{"book_id", plot.book_id},   {"book_title", book_title},     {"index", plot.index},
              {"summary", plot.summary},   {"scenario", plot.scenario},    {"conversations", std::move(convs)}};
}

std::string book_to_jsonl(const Book& book) {
  std::string out;
  for (const auto& p : book.plots) {
    out += plot_to_json(p, book.title).dump();
    out.push_back('\n');
  }
  return out;
}

Book book_from_jsonl(std::string_view data, const std::string& fallback_id) {
  Book book;
  book.id = fallback_id;
  std::size_t line_no = 0;
  for (const auto& raw : text::split(data, '\n')) {
    ++line_no;
    std::string line = text::trim(raw);
    if (line.empty()) continue;
    const std::string rec = fallback_id + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedRecord, rec + ": " + e.what());
    }
    try {
      Plot p;
      p.book_id = j.at("book_id").get<std::string>();
      p.index = j.at("index").get<int>();
      p.summary = j.at("summary").get<std::string>();
      p.scenario = j.at("scenario").get<std::string>();
      if (book.plots.empty()) {
        book.id = p.book_id;
        book.title = j.value("book_title", p.book_id);
      } else if (p.book_id != book.id) {
        throw Error(ErrorCode::MalformedRecord, rec + ": book_id '" + p.book_id + "' differs from '" + book.id + "'");
      }
      for (const auto& c : j.at("conversations")) {
        Conversation conv;
        conv.book_id = p.book_id;
        conv.plot_index = p.index;
        conv.environment = c.value("environment", "");
        for (const auto& t : c.at("turns")) {
          Turn turn;
          turn.speaker = t.at("speaker").get<std::string>();
          for (const auto& s : t.at("segments")) {
            turn.segments.push_back(
                {segment_kind_from_string(s.at("kind").get<std::string>()), s.at("text").get<std::string>()});
          }
          conv.turns.push_back(std::move(turn));
        }
        p.conversations.push_back(std::move(conv));
      }
      book.plots.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedRecord, rec + ": " + e.what());
    }
  }
  std::stable_sort(book.plots.begin(), book.plots.end(),
                   [](const Plot& a, const Plot& b) { return a.index < b.index; });
  validate_book(book);
  return book;
}

void write_corpus(const Corpus& corpus, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
  for (const auto& b : corpus.books) {
    std::ofstream out(dir / (b.id + ".jsonl"), std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + (dir / (b.id + ".jsonl")).string());
    out << book_to_jsonl(b);
  }
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

namespace {

struct LoadedBook {
  Book book;
  std::vector<std::string> warnings;
};

LoadedBook load_one(const fs::path& file, const IngestOptions& options) {
  LoadedBook loaded;
  const std::string data = read_file(file);
  const std::string id = text::slugify(file.stem().string());
  if (options.format == CorpusFormat::CoserJson) {
    json doc;
    try {
      doc = json::parse(data);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedRecord, file.filename().string() + ": " + e.what());
    }
    loaded.book = book_from_source(doc, id, options.adapter, &loaded.warnings);
  } else {
    loaded.book = book_from_jsonl(data, id);
  }
  if (options.aliases) {
    if (auto it = options.aliases->find(loaded.book.id); it != options.aliases->end()) {
      CharacterRegistry reg = it->second;
      for (auto& plot : loaded.book.plots) {
        for (auto& conv : plot.conversations) {
          for (auto& turn : conv.turns) turn.speaker = reg.resolve(turn.speaker);
        }
      }
    }
  }
  return loaded;
}

bool wanted(const Book& b, const std::vector<std::string>& only) {
  if (only.empty()) return true;
  for (const auto& o : only) {
    if (o == b.id || text::normalize(o) == text::normalize(b.title)) return true;
  }
  return false;
}

}  // namespace

Corpus ingest_corpus(const fs::path& path, const IngestOptions& options) {
  std::error_code ec;
  std::vector<fs::path> files;
  const std::string ext = options.format == CorpusFormat::CoserJson ? ".json" : ".jsonl";
  if (fs::is_regular_file(path, ec)) {
    files.push_back(path);
  } else if (fs::is_directory(path, ec)) {
    for (const auto& entry : fs::directory_iterator(path, ec)) {
      if (entry.is_regular_file() && entry.path().extension() == ext) files.push_back(entry.path());
    }
  } else {
    throw Error(ErrorCode::UnreadableSource, path.string() + " does not exist");
  }
  if (files.empty()) throw Error(ErrorCode::UnreadableSource, "no " + ext + " files under " + path.string());
  std::sort(files.begin(), files.end());

  std::vector<LoadedBook> loaded(files.size());
  const unsigned threads = std::max(1u, options.threads);
  for (std::size_t start = 0; start < files.size(); start += threads) {
    std::vector<std::future<LoadedBook>> batch;
    for (std::size_t i = start; i < std::min(files.size(), start + threads); ++i) {
      batch.push_back(std::async(threads > 1 ? std::launch::async : std::launch::deferred,
                                 [&, i] { return load_one(files[i], options); }));
    }
    for (std::size_t k = 0; k < batch.size(); ++k) loaded[start + k] = batch[k].get();
  }

  Corpus corpus;
  for (auto& lb : loaded) {
    if (!wanted(lb.book, options.only_books)) continue;
    if (corpus.find_book(lb.book.id) && corpus.find_book(lb.book.id)->id == lb.book.id) {
      throw Error(ErrorCode::MalformedRecord, "book id '" + lb.book.id + "' appears in more than one file");
    }
    for (auto& w : lb.warnings) corpus.warnings.push_back(std::move(w));
    corpus.books.push_back(std::move(lb.book));
  }
  return corpus;
}

}  // namespace evolvtrip
