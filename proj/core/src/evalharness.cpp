#include "evolvtrip/evalharness.hpp"

#include <algorithm>
#include <iomanip>
#include <regex>
#include <sstream>

#include "evolvtrip/csv.hpp"
#include "evolvtrip/error.hpp"
#include "evolvtrip/text.hpp"

using nlohmann::json;

namespace evolvtrip {

std::string_view to_string(ContextMode m) {
  return m == ContextMode::CurrentPlot ? "current" : "extended";
}

ContextMode context_mode_from_string(std::string_view s) {
  if (text::iequals(s, "current") || text::iequals(s, "current-plot")) return ContextMode::CurrentPlot;
  if (text::iequals(s, "extended") || text::iequals(s, "current-plus-prev-summaries")) {
    return ContextMode::CurrentPlusPrevSummaries;
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown context mode '" + std::string(s) + "'");
}

std::string EvalCondition::label() const {
  std::string out(to_string(context));
  if (triples) out += "+triples";
  return out;
}

EvalCondition EvalCondition::from_label(std::string_view label) {
  EvalCondition c;
  std::string_view ctx = label;
  if (auto plus = label.find('+'); plus != std::string_view::npos) {
    if (!text::iequals(label.substr(plus + 1), "triples")) {
      throw Error(ErrorCode::ConfigInvalid, "unknown condition '" + std::string(label) + "'");
    }
    c.triples = true;
    ctx = label.substr(0, plus);
  }
  c.context = context_mode_from_string(ctx);
  return c;
}

std::vector<EvalCondition> all_conditions() {
  return {{ContextMode::CurrentPlot, false},
          {ContextMode::CurrentPlot, true},
          {ContextMode::CurrentPlusPrevSummaries, false},
          {ContextMode::CurrentPlusPrevSummaries, true}};
}

PromptVariant prompt_variant_from_string(std::string_view s) {
  if (text::iequals(s, "guided")) return PromptVariant::Guided;
  if (text::iequals(s, "direct")) return PromptVariant::Direct;
  throw Error(ErrorCode::ConfigInvalid, "unknown prompt variant '" + std::string(s) + "'");
}

std::string_view to_string(PromptVariant v) { return v == PromptVariant::Guided ? "guided" : "direct"; }

// ---------------------------------------------------------------------------

std::string render_triple_block(const std::vector<MentalStateTriple>& triples) {
  std::string out = "Relevant mental state triples:\n";
  if (triples.empty()) out += "(none)\n";
  for (const auto& t : triples) out += t.render() + "\n";
  return out;
}

namespace {

std::string story_plot(const Book& book, const Plot& plot, ContextMode mode, const std::optional<int>& window) {
  if (mode == ContextMode::CurrentPlot || plot.index <= 1) return plot.summary;
  int first = 1;
  if (window) first = std::max(1, plot.index - *window);
  std::string out;
  for (int i = first; i < plot.index; ++i) {
    const Plot* prev = book.find_plot(i);
    if (prev == nullptr) continue;
    out += "Plot " + std::to_string(i) + ": " + prev->summary + "\n\n";
  }
  if (out.empty()) return plot.summary;
  out += "Plot " + std::to_string(plot.index) + " (current): " + plot.summary;
  return out;
}

}  // namespace

EvalPrompt assemble_context(const TomQuestion& q, const Corpus& corpus, const KgIndex& kgs,
                            const EvalCondition& condition, const ContextOptions& options,
                            const TemplateSet& templates) {
  const Book* book = corpus.find_book(q.book_id);
  const Plot* plot = book ? book->find_plot(q.plot_index) : nullptr;
  if (plot == nullptr) {
    throw Error(ErrorCode::MissingPlot, q.id + ": plot " + std::to_string(q.plot_index) + " of " + q.book_id +
                                            " is not in the corpus");
  }

  std::string triple_block;
  if (condition.triples) {
    auto it = kgs.find(book->id);
    if (it == kgs.end() || it->second == nullptr) {
      throw Error(ErrorCode::MissingKg, q.id + ": no knowledge graph for " + book->id);
    }
    const TemporalKG& kg = *it->second;
    std::vector<MentalStateTriple> state;
    if (kg.has_character(q.character)) state = kg.state_at(q.character, q.plot_index);
    triple_block = render_triple_block(state) + "\n";
  }

  const std::string name = options.variant == PromptVariant::Guided ? "eval_guided" : "eval_direct";
  EvalPrompt p;
  p.question_id = q.id;
  p.condition = condition;
  p.text = templates.get(name).render({{"character", q.character},
                                       {"book_title", book->title},
                                       {"story_plot", story_plot(*book, *plot, condition.context,
                                                                 options.summary_window)},
                                       {"scenario", q.scenario.empty() ? plot->scenario : q.scenario},
                                       {"question", q.stem},
                                       {"choices", q.render_options()},
                                       {"triple_block", triple_block}});
  p.token_estimate = estimate_tokens(p.text);
  return p;
}

std::optional<char> parse_answer(std::string_view raw) {
  static const std::regex answer_re(R"re(\{\s*["']?answer["']?\s*:\s*["']?([A-Da-d])["']?\s*\})re",
                                    std::regex::icase);
  const std::string s(raw);
  std::smatch m;
  if (std::regex_search(s, m, answer_re)) {
    return static_cast<char>(std::toupper(static_cast<unsigned char>(m[1].str()[0])));
  }
  std::optional<char> lone;
  for (const auto& line : text::split(s, '\n')) {
    std::string t = text::trim(line);
    if (!t.empty() && (t.back() == '.' || t.back() == ')')) t.pop_back();
    if (!t.empty() && t.front() == '(') t.erase(t.begin());
    if (t.size() == 1 && t[0] >= 'A' && t[0] <= 'D') {
      if (lone && *lone != t[0]) return std::nullopt;
      lone = t[0];
    }
  }
  return lone;
}

// ---------------------------------------------------------------------------

json Prediction::to_json() const {
  return json{{"question_id", question_id},
              {"model", model_id},
              {"condition", condition.label()},
              {"letter", letter ? json(std::string(1, *letter)) : json(nullptr)},
              {"raw_text", raw_text},
              {"prompt_tokens", prompt_tokens},
              {"error", error}};
}

Prediction Prediction::from_json(const json& j) {
  Prediction p;
  try {
    p.question_id = j.at("question_id").get<std::string>();
    p.model_id = j.at("model").get<std::string>();
    p.condition = EvalCondition::from_label(j.at("condition").get<std::string>());
    if (!j.at("letter").is_null()) p.letter = j.at("letter").get<std::string>().at(0);
    p.raw_text = j.value("raw_text", "");
    p.prompt_tokens = j.value("prompt_tokens", static_cast<std::int64_t>(0));
    p.error = j.value("error", "");
  } catch (const std::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("prediction record: ") + e.what());
  }
  return p;
}

std::int64_t ScoreCell::percent_hundredths() const {
  return total == 0 ? 0 : text::percent_hundredths(correct, total);
}

ScoreCell ScoreRow::average() const {
  ScoreCell sum;
  for (const auto& [d, c] : cells) {
    sum.correct += c.correct;
    sum.total += c.total;
  }
  return sum;
}

const ScoreRow* ScoreTable::find(const std::string& model_id, const EvalCondition& c) const {
  for (const auto& r : rows) {
    if (r.model_id == model_id && r.condition == c) return &r;
  }
  return nullptr;
}

json ScoreTable::to_json() const {
  json out = json::array();
  for (const auto& r : rows) {
    json cells = json::object();
    for (Dimension d : kAllDimensions) {
      auto it = r.cells.find(d);
      ScoreCell c = it == r.cells.end() ? ScoreCell{} : it->second;
      cells[std::string(to_string(d))] = {{"correct", c.correct}, {"total", c.total}};
    }
    out.push_back({{"model", r.model_id},
                   {"condition", r.condition.label()},
                   {"cells", std::move(cells)},
                   {"unparseable", r.unparseable}});
  }
  return out;
}

ScoreTable ScoreTable::from_json(const json& j) {
  ScoreTable t;
  try {
    for (const auto& r : j) {
      ScoreRow row;
      row.model_id = r.at("model").get<std::string>();
      row.condition = EvalCondition::from_label(r.at("condition").get<std::string>());
      row.unparseable = r.value("unparseable", static_cast<std::int64_t>(0));
      for (const auto& [name, cell] : r.at("cells").items()) {
        ScoreCell c{cell.at("correct").get<std::int64_t>(), cell.at("total").get<std::int64_t>()};
        if (c.total > 0) row.cells[dimension_from_string(name)] = c;
      }
      t.rows.push_back(std::move(row));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("score table: ") + e.what());
  }
  return t;
}

ScoreTable score(const std::vector<Prediction>& predictions, const std::map<std::string, TomQuestion>& key) {
  std::vector<std::string> model_order;
  std::map<std::pair<std::string, EvalCondition>, ScoreRow> rows;
  for (const auto& p : predictions) {
    auto q = key.find(p.question_id);
    if (q == key.end()) throw Error(ErrorCode::UnknownQuestionId, "prediction for unknown question " + p.question_id);
    if (std::find(model_order.begin(), model_order.end(), p.model_id) == model_order.end()) {
      model_order.push_back(p.model_id);
    }
    ScoreRow& row = rows[{p.model_id, p.condition}];
    row.model_id = p.model_id;
    row.condition = p.condition;
    ScoreCell& cell = row.cells[q->second.dimension];
    ++cell.total;
    if (!p.letter) {
      ++row.unparseable;
    } else if (*p.letter == q->second.correct) {
      ++cell.correct;
    }
  }
  ScoreTable table;
  for (const auto& model : model_order) {
    for (const auto& c : all_conditions()) {
      auto it = rows.find({model, c});
      if (it != rows.end()) table.rows.push_back(it->second);
    }
  }
  return table;
}

ReportLayout report_layout_from_string(std::string_view s) {
  if (text::iequals(s, "plain") || text::iequals(s, "text")) return ReportLayout::Plain;
  if (text::iequals(s, "markdown") || text::iequals(s, "md")) return ReportLayout::Markdown;
  if (text::iequals(s, "csv")) return ReportLayout::Csv;
  throw Error(ErrorCode::ConfigInvalid, "unknown report layout '" + std::string(s) + "'");
}

namespace {

std::string cell_text(const ScoreRow& row, std::optional<Dimension> d) {
  ScoreCell c;
  if (d) {
    auto it = row.cells.find(*d);
    if (it == row.cells.end()) return "-";
    c = it->second;
  } else {
    c = row.average();
  }
  return c.total == 0 ? "-" : text::format_hundredths(c.percent_hundredths());
}

std::vector<std::string> row_cells(const ScoreRow& row) {
  std::vector<std::string> out;
  for (Dimension d : kAllDimensions) out.push_back(cell_text(row, d));
  out.push_back(cell_text(row, std::nullopt));
  return out;
}

}  // namespace

std::string render_report(const ScoreTable& table, ReportLayout layout) {
  const std::vector<std::string> columns = {"Belief", "Desire", "Emotion", "Intention", "Avg"};
  std::ostringstream out;

  if (layout == ReportLayout::Csv) {
    out << csv::format_row({"model", "condition", "belief", "desire", "emotion", "intention", "avg"});
    for (const auto& r : table.rows) {
      csv::Row line = {r.model_id, r.condition.label()};
      for (auto& c : row_cells(r)) line.push_back(std::move(c));
      out << csv::format_row(line);
    }
    return out.str();
  }

  std::set<ContextMode> modes;
  for (const auto& r : table.rows) modes.insert(r.condition.context);

  bool first_section = true;
  for (ContextMode mode : {ContextMode::CurrentPlot, ContextMode::CurrentPlusPrevSummaries}) {
    if (!modes.count(mode)) continue;
    std::vector<std::pair<std::string, std::vector<std::string>>> lines;
    for (const auto& r : table.rows) {
      if (r.condition.context != mode) continue;
      lines.emplace_back(r.condition.triples ? "  w Triple" : r.model_id, row_cells(r));
    }
    if (!first_section) out << "\n";
    first_section = false;
    if (modes.size() > 1) {
      out << (mode == ContextMode::CurrentPlot ? "Context: current plot" : "Context: current plot + previous summaries")
          << "\n";
    }

    if (layout == ReportLayout::Markdown) {
      out << "| Model |";
      for (const auto& c : columns) out << " " << c << " |";
      out << "\n|---|";
      for (std::size_t i = 0; i < columns.size(); ++i) out << "---:|";
      out << "\n";
      for (const auto& [label, cells] : lines) {
        out << "| " << (label.rfind("  ", 0) == 0 ? label.substr(2) : label) << " |";
        for (const auto& c : cells) out << " " << c << " |";
        out << "\n";
      }
      continue;
    }

    std::size_t width = 5;
    for (const auto& [label, cells] : lines) width = std::max(width, label.size());
    out << std::left << std::setw(static_cast<int>(width + 2)) << "Model";
    for (const auto& c : columns) out << std::right << std::setw(11) << c;
    out << "\n";
    for (const auto& [label, cells] : lines) {
      out << std::left << std::setw(static_cast<int>(width + 2)) << label;
      for (const auto& c : cells) out << std::right << std::setw(11) << c;
      out << "\n";
    }
  }
  return out.str();
}

// ---------------------------------------------------------------------------

EvalRun run_eval(const Corpus& corpus, const KgIndex& kgs, const std::vector<TomQuestion>& questions,
                 const std::vector<GenerationSettings>& models, const std::vector<EvalCondition>& conditions,
                 Gateway& gateway, const ContextOptions& options, const TemplateSet& templates) {
  std::vector<const TomQuestion*> ordered;
  for (const auto& q : questions) ordered.push_back(&q);
  std::sort(ordered.begin(), ordered.end(), [](const TomQuestion* a, const TomQuestion* b) {
    return std::tie(a->book_id, a->plot_index, a->id) < std::tie(b->book_id, b->plot_index, b->id);
  });

  EvalRun run;
  std::vector<ChatRequest> requests;
  std::vector<std::size_t> request_of;  // prediction index -> request index, or npos
  constexpr std::size_t none = static_cast<std::size_t>(-1);

  for (const auto* q : ordered) {
    for (const auto& model : models) {
      for (const auto& c : conditions) {
        Prediction p;
        p.question_id = q->id;
        p.model_id = model.model_id;
        p.condition = c;
        try {
          EvalPrompt prompt = assemble_context(*q, corpus, kgs, c, options, templates);
          p.prompt_tokens = prompt.token_estimate;
          request_of.push_back(requests.size());
          requests.push_back(make_request(model.model_id, std::move(prompt.text), model.temperature,
                                          model.max_output_tokens, model.seed));
        } catch (const Error& e) {
          p.error = e.what();
          run.errors.push_back(q->id + " [" + model.model_id + ", " + c.label() + "]: " + e.what());
          request_of.push_back(none);
        }
        run.predictions.push_back(std::move(p));
      }
    }
  }

  std::vector<BatchOutcome> outcomes = gateway.run_batch(requests);
  for (std::size_t i = 0; i < run.predictions.size(); ++i) {
    if (request_of[i] == none) continue;
    Prediction& p = run.predictions[i];
    const BatchOutcome& o = outcomes[request_of[i]];
    if (o.ok()) {
      p.raw_text = o.response->text;
      p.letter = parse_answer(p.raw_text);
    } else {
      p.error = o.error_message;
      run.errors.push_back(p.question_id + " [" + p.model_id + ", " + p.condition.label() + "]: " + o.error_message);
    }
  }

  std::map<std::string, TomQuestion> key;
  for (const auto& q : questions) key.emplace(q.id, q);
  run.table = score(run.predictions, key);
  return run;
}

std::string predictions_to_jsonl(const std::vector<Prediction>& predictions) {
  std::string out;
  for (const auto& p : predictions) out += p.to_json().dump() + "\n";
  return out;
}

std::vector<Prediction> predictions_from_jsonl(std::string_view data) {
  std::vector<Prediction> out;
  for (const auto& line : text::split(data, '\n')) {
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(Prediction::from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedRecord, std::string("prediction line: ") + e.what());
    }
  }
  return out;
}

}  // namespace evolvtrip
