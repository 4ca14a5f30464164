#include "evolvtrip/ftemit.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "evolvtrip/error.hpp"
#include "evolvtrip/text.hpp"

using nlohmann::json;

namespace evolvtrip {

std::string_view to_string(Split s) { return s == Split::Train ? "train" : "ood_test"; }

json TrainingExample::to_json() const {
  json j;
  j["input"] = input;
  j["output"] = output;
  return j;
}

std::string render_training_output(const std::vector<MentalStateTriple>& triples, char answer, bool with_triples) {
  std::string out;
  if (with_triples) {
    out += "Relevant mental state triples:\n";
    for (const auto& t : triples) out += t.render() + "\n";
  }
  out += "Answer:\n{answer: ";
  out += answer;
  out += "}";
  return out;
}

TrainingExample emit_example(const TomQuestion& q, const Corpus& corpus, const KgIndex& kgs, bool with_triples,
                             const EmitOptions& options, const TemplateSet& templates) {
  if (!options.waive_verification && q.state != QuestionState::HumanVerified) {
    throw Error(ErrorCode::UnverifiedQuestion, q.id + " is " + std::string(to_string(q.state)));
  }
  // The input never carries triples; with_triples only changes the target.
  EvalPrompt prompt = assemble_context(q, corpus, kgs, EvalCondition{options.context, false},
                                       ContextOptions{PromptVariant::Guided, std::nullopt}, templates);

  std::vector<MentalStateTriple> state;
  if (with_triples) {
    auto it = kgs.find(q.book_id);
    if (it == kgs.end() || it->second == nullptr) throw Error(ErrorCode::MissingKg, q.id + ": no graph for " + q.book_id);
    if (it->second->has_character(q.character)) state = it->second->state_at(q.character, q.plot_index);
  }

  TrainingExample ex;
  ex.question_id = q.id;
  ex.input = std::move(prompt.text);
  ex.output = render_training_output(state, q.correct, with_triples);
  ex.with_triples = with_triples;
  return ex;
}

SplitSpec SplitSpec::benchmark_default() {
  return SplitSpec{{"The Hound of the Baskervilles", "Notes from Underground", "The Turn of the Screw",
                    "Jude the Obscure", "Siddhartha"}};
}

std::map<Dimension, std::size_t> SplitResult::counts(Split s) const {
  std::map<Dimension, std::size_t> out;
  for (Dimension d : kAllDimensions) out[d] = 0;
  for (const auto& q : s == Split::Train ? train : ood) ++out[q.dimension];
  return out;
}

std::string SplitResult::render() const {
  std::ostringstream out;
  for (Split s : {Split::Train, Split::OodTest}) {
    out << to_string(s) << ": " << (s == Split::Train ? train.size() : ood.size()) << " questions";
    for (const auto& [d, n] : counts(s)) out << ", " << to_string(d) << " " << n;
    out << "\n";
  }
  return out.str();
}

SplitResult split_ood(const Corpus& corpus, const std::vector<TomQuestion>& questions, const SplitSpec& spec) {
  SplitResult out;
  for (const auto& name : spec.ood_books) {
    const Book* book = corpus.find_book(name);
    if (book == nullptr) throw Error(ErrorCode::UnknownBook, "OOD book '" + name + "' is not in the corpus");
    out.ood_book_ids.insert(book->id);
  }
  for (const auto& q : questions) {
    (out.ood_book_ids.count(q.book_id) ? out.ood : out.train).push_back(q);
  }
  return out;
}

json split_manifest(const Corpus& corpus, const SplitResult& split) {
  json j = json::object();
  for (const auto& b : corpus.books) {
    j[b.id] = std::string(to_string(split.ood_book_ids.count(b.id) ? Split::OodTest : Split::Train));
  }
  return j;
}

std::string training_jsonl(std::vector<TrainingExample> examples) {
  std::stable_sort(examples.begin(), examples.end(),
                   [](const auto& a, const auto& b) { return a.question_id < b.question_id; });
  std::string out;
  for (const auto& e : examples) out += e.to_json().dump() + "\n";
  return out;
}

std::size_t write_training_file(const std::vector<TrainingExample>& examples, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << training_jsonl(examples);
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
  return examples.size();
}

}  // namespace evolvtrip
