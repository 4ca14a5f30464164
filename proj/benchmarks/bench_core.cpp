#include <benchmark/benchmark.h>

#include <random>

#include "evolvtrip/corpus.hpp"
#include "evolvtrip/evalharness.hpp"
#include "evolvtrip/llmgate.hpp"
#include "evolvtrip/tkg.hpp"
#include "evolvtrip/triples.hpp"

using namespace evolvtrip;

namespace {

const char* kLine =
    "King Lear: [I must know which daughter loves me most.] Tell me, my daughters, (he rises) which of you shall we "
    "say doth love us most?";

std::string triple_response(int n) {
  std::string out = "{\n  \"Target Character\": [\n";
  for (int i = 0; i < n; ++i) {
    out += "    (King Lear, FeelsTowardsCordelia, wounded and betrayed by refusal number " + std::to_string(i) + "),\n";
  }
  return out + "  ]\n}";
}

// A graph with `plots` plots where each of three characters revises its
// state every plot.
TemporalKG build_graph(int plots) {
  TemporalKG kg("bench", plots);
  const std::vector<std::string> cast = {"King Lear", "Cordelia", "Kent"};
  for (int p = 1; p <= plots; ++p) {
    for (const auto& who : cast) {
      kg.insert_batch(make_batch(who, p,
                                 {make_triple(who, "BelievesAboutGoneril", "Goneril is loyal " + std::to_string(p), p),
                                  make_triple(who, "Feels", p % 2 ? "hopeful" : "not hopeful", p),
                                  make_triple(who, "IntendsTo", "act at plot " + std::to_string(p), p)}));
    }
  }
  return kg;
}

}  // namespace

static void BM_ParseTurn(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(parse_turn(kLine));
}
BENCHMARK(BM_ParseTurn);

static void BM_ParseTripleResponse(benchmark::State& state) {
  const std::string text = triple_response(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(parse_triple_response(text, 1));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ParseTripleResponse)->Arg(6)->Arg(64);

static void BM_InsertBatches(benchmark::State& state) {
  const int plots = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(build_graph(plots));
}
BENCHMARK(BM_InsertBatches)->Arg(10)->Arg(50);

static void BM_StateAt(benchmark::State& state) {
  const int plots = static_cast<int>(state.range(0));
  const TemporalKG kg = build_graph(plots);
  int t = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(kg.state_at("Cordelia", t));
    t = t % plots + 1;
  }
}
BENCHMARK(BM_StateAt)->Arg(10)->Arg(50);

static void BM_RequestDigest(benchmark::State& state) {
  ChatRequest req;
  req.model_id = "gpt-4o";
  req.messages = {{Role::System, "You are an expert in narrative analysis."},
                  {Role::User, std::string(static_cast<std::size_t>(state.range(0)), 'x')}};
  for (auto _ : state) benchmark::DoNotOptimize(req.digest());
  state.SetBytesProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RequestDigest)->Arg(1 << 10)->Arg(1 << 14);

static void BM_Score(benchmark::State& state) {
  std::mt19937 rng(3);
  std::map<std::string, TomQuestion> key;
  std::vector<Prediction> preds;
  for (int i = 0; i < state.range(0); ++i) {
    TomQuestion q;
    q.book_id = "b";
    q.plot_index = 1;
    q.character = "C" + std::to_string(i);
    q.dimension = kAllDimensions[static_cast<std::size_t>(i % 4)];
    q.id = question_id(q.book_id, 1, q.character, q.dimension);
    q.correct = 'A';
    key[q.id] = q;
    for (const auto& c : all_conditions()) {
      Prediction p;
      p.question_id = q.id;
      p.model_id = "gpt-4o-mini";
      p.condition = c;
      p.letter = static_cast<char>('A' + rng() % 4);
      preds.push_back(p);
    }
  }
  for (auto _ : state) benchmark::DoNotOptimize(score(preds, key));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(preds.size()));
}
BENCHMARK(BM_Score)->Arg(1000);
BENCHMARK_MAIN();
