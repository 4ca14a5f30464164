#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "evolvtrip/evalharness.hpp"

namespace evolvtrip {

enum class Split { Train, OodTest };

std::string_view to_string(Split s);

struct TrainingExample {
  std::string question_id;
  std::string input;
  std::string output;
  bool with_triples = false;
  Split split = Split::Train;

  // {input, output}
  nlohmann::json to_json() const;
};

struct EmitOptions {
  ContextMode context = ContextMode::CurrentPlot;
  // Accept questions that never passed human review.
  bool waive_verification = false;
};

// "Relevant mental state triples:\n(...)\n...\nAnswer:\n{answer: X}" with
// triples, "Answer:\n{answer: X}" without.
std::string render_training_output(const std::vector<MentalStateTriple>& triples, char answer, bool with_triples);

// Throws UnverifiedQuestion (unless waived), MissingPlot or MissingKg.
TrainingExample emit_example(const TomQuestion& q, const Corpus& corpus, const KgIndex& kgs, bool with_triples,
                             const EmitOptions& options = {}, const TemplateSet& templates = {});

struct SplitSpec {
  std::set<std::string> ood_books;  // ids or titles

  static SplitSpec benchmark_default();
};

struct SplitResult {
  std::vector<TomQuestion> train;
  std::vector<TomQuestion> ood;
  std::set<std::string> ood_book_ids;

  std::map<Dimension, std::size_t> counts(Split s) const;
  std::string render() const;
};

// Partitions by book. Throws UnknownBook for a spec entry not in the corpus.
SplitResult split_ood(const Corpus& corpus, const std::vector<TomQuestion>& questions, const SplitSpec& spec);

// {book_id: "train" | "ood_test"} for every corpus book.
nlohmann::json split_manifest(const Corpus& corpus, const SplitResult& split);

// Examples sorted by question id (stable for with/without pairs).
std::string training_jsonl(std::vector<TrainingExample> examples);
std::size_t write_training_file(const std::vector<TrainingExample>& examples, const std::filesystem::path& path);

}  // namespace evolvtrip
