// Acceptance suite. One line per criterion: PASS, FAIL, SKIP or ADVISORY.
// Exits nonzero only when a binding criterion fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "evolvtrip/corpus.hpp"
#include "evolvtrip/evalharness.hpp"
#include "evolvtrip/ftemit.hpp"
#include "evolvtrip/qagen.hpp"
#include "evolvtrip/text.hpp"
#include "evolvtrip/tkg.hpp"
#include "evolvtrip/triples.hpp"
#include "kg_model.hpp"
#include "test_support.hpp"

using namespace evolvtrip;
namespace fs = std::filesystem;
using evolvtrip::testing::TempDir;

namespace {

enum class Outcome { Pass, Fail, Skip, Advisory };

struct Verdict {
  Outcome outcome = Outcome::Pass;
  std::string detail;
};

// Collects mismatches; the first few are kept for the report line.
struct Checker {
  int failures = 0;
  std::string first;

  void expect(bool ok, const std::string& what) {
    if (ok) return;
    if (failures++ == 0) first = what;
  }
  Verdict verdict(const std::string& summary) const {
    if (failures == 0) return {Outcome::Pass, summary};
    return {Outcome::Fail, std::to_string(failures) + " mismatch(es), first: " + first};
  }
};

struct Criterion {
  int number;
  std::string name;
  double budget_s;  // 0 = no time limit
  std::function<Verdict()> run;
};

std::string seconds(double s) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(2);
  o << s << "s";
  return o.str();
}

// Trailing whitespace stripped from every line and from the end.
std::string pin_whitespace(const std::string& s) {
  std::string out;
  for (const auto& line : text::split(s, '\n')) {
    std::string l = line;
    while (!l.empty() && (l.back() == ' ' || l.back() == '\t' || l.back() == '\r')) l.pop_back();
    out += l + "\n";
  }
  while (!out.empty() && (out.back() == '\n' || out.back() == ' ')) out.pop_back();
  return out;
}

UtteranceSegment seg(SegmentKind k, std::string t) { return UtteranceSegment{k, std::move(t)}; }

// ---------------------------------------------------------------------------

Verdict dialogue_parsing() {
  struct Golden {
    std::string line;
    std::string speaker;
    std::vector<UtteranceSegment> segments;
  };
  const std::vector<Golden> golden = {
      {"King Lear: [I must know which daughter loves me most.] Tell me, my daughters, which of you shall we say doth "
       "love us most?",
       "King Lear",
       {seg(SegmentKind::Thought, "I must know which daughter loves me most."),
        seg(SegmentKind::Speech, "Tell me, my daughters, which of you shall we say doth love us most?")}},
      {"Goneril: Sir, I love you more than words can wield the matter; dearer than eyesight, space and liberty.",
       "Goneril",
       {seg(SegmentKind::Speech,
            "Sir, I love you more than words can wield the matter; dearer than eyesight, space and liberty.")}},
      {"Cordelia: (remains silent)", "Cordelia", {seg(SegmentKind::Action, "remains silent")}},
      {"King Lear: [She speaks well.] Of all these bounds, we make thee lady. What says our second daughter, Regan?",
       "King Lear",
       {seg(SegmentKind::Thought, "She speaks well."),
        seg(SegmentKind::Speech, "Of all these bounds, we make thee lady. What says our second daughter, Regan?")}},
      {"Regan: I am made of that self metal as my sister, and prize me at her worth.",
       "Regan",
       {seg(SegmentKind::Speech, "I am made of that self metal as my sister, and prize me at her worth.")}},
      {"Cordelia: Then poor Cordelia! And yet not so; since I am sure my love’s more ponderous than my tongue.",
       "Cordelia",
       {seg(SegmentKind::Speech,
            "Then poor Cordelia! And yet not so; since I am sure my love’s more ponderous than my tongue.")}},
  };
  Checker c;
  for (const auto& g : golden) {
    auto parsed = parse_turn(g.line);
    c.expect(parsed.turn.speaker == g.speaker, "speaker of: " + g.line);
    c.expect(parsed.turn.segments == g.segments, "segments of: " + g.line);
    c.expect(parsed.warnings.empty(), "warnings for: " + g.line);
  }
  return c.verdict(std::to_string(golden.size()) + "/" + std::to_string(golden.size()) + " lines");
}

Verdict triple_parsing() {
  const char* output = R"({{
    "Target Character":
        [
            (King Lear, DesiresToKnow, which daughter loves King Lear most),
            (King Lear, IntendsTo, divide the kingdom based on his daughters' declarations of love),
            (King Lear, BelievesAboutCordelia, Cordelia's silence is a sign of defiance and disrespect),
            (King Lear, FeelsTowardsCordelia, wounded and betrayed by Cordelia's refusal to flatter King Lear),
            (King Lear, BelievesAboutGoneril, Goneril speaks well and expresses her love convincingly),
            (King Lear, FeelsTowardsCordelia, disappointed and shocked by Cordelia's honesty)
        ]
}})";
  Checker c;
  auto parsed = parse_triple_response(output, 1);
  c.expect(parsed.triples.size() == 6, "triple count " + std::to_string(parsed.triples.size()));
  c.expect(parsed.malformed.empty() && parsed.unknown_predicate.empty(), "quarantined entries");
  std::map<Dimension, int> dims;
  for (const auto& t : parsed.triples) {
    c.expect(t.subject == "King Lear", "subject " + t.subject);
    ++dims[t.dimension];
  }
  const std::map<Dimension, int> want = {
      {Dimension::Belief, 2}, {Dimension::Emotion, 2}, {Dimension::Desire, 1}, {Dimension::Intention, 1}};
  c.expect(dims == want, "dimension multiset");
  return c.verdict("6 triples, B2 E2 D1 I1");
}

std::vector<std::string> ids(const std::vector<MentalStateTriple>& ts) {
  std::vector<std::string> out;
  for (const auto& t : ts) out.push_back(t.id);
  return out;
}

// Link checks computed here rather than through check_invariants().
void check_links(const TemporalKG& kg, Checker& c, const std::string& tag) {
  std::map<std::string, std::string> next;
  for (const auto& l : kg.links()) {
    const auto* a = kg.find_edge(l.old_id);
    const auto* b = kg.find_edge(l.new_id);
    c.expect(a && b, tag + ": dangling link " + l.old_id + "->" + l.new_id);
    if (!a || !b) continue;
    c.expect(a->plot_index < b->plot_index, tag + ": link not time-increasing " + l.old_id + "->" + l.new_id);
    c.expect(a->subject == b->subject, tag + ": link crosses characters");
    c.expect(!next.count(l.old_id), tag + ": edge superseded twice " + l.old_id);
    next[l.old_id] = l.new_id;
  }
  for (const auto& [start, unused] : next) {
    std::set<std::string> seen;
    std::string cur = start;
    while (next.count(cur)) {
      if (!seen.insert(cur).second) {
        c.expect(false, tag + ": cycle through " + start);
        break;
      }
      cur = next.at(cur);
    }
  }
  c.expect(kg.check_invariants().empty(), tag + ": check_invariants reported a violation");
}

// Random graphs shared by the temporal-semantics and invariant criteria.
template <typename Fn>
void random_graphs(int cases, Fn&& visit) {
  std::mt19937 rng(7103);
  const std::vector<std::string> cast = {"King Lear", "Cordelia", "Kent", "Goneril", "Edmund"};
  const std::vector<std::string> preds = {"BelievesAboutCordelia", "BelievesAboutKent", "FeelsTowardsGoneril",
                                          "Feels", "IntendsTo", "DesiresToKnow", "Desires"};
  const std::vector<std::string> objects = {"the kingdom is safe", "the kingdom is not safe", "loyal",
                                            "never loyal", "anxious", "to flee"};
  auto pick = [&](const auto& v) { return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)]; };
  for (int iter = 0; iter < cases; ++iter) {
    const int plots = std::uniform_int_distribution<int>(1, 10)(rng);
    const int chars = std::uniform_int_distribution<int>(1, 5)(rng);
    TemporalKG kg("book", plots);
    evolvtrip::testing::KgModel model;
    std::map<std::string, int> last;
    int budget = 50;
    const int steps = std::uniform_int_distribution<int>(1, 15)(rng);
    for (int s = 0; s < steps && budget > 0; ++s) {
      const std::string who = cast[static_cast<std::size_t>(std::uniform_int_distribution<int>(0, chars - 1)(rng))];
      const int lo = last.count(who) ? last[who] : 1;
      const int plot = std::uniform_int_distribution<int>(lo, plots)(rng);
      const int n = std::uniform_int_distribution<int>(0, std::min(5, budget))(rng);
      std::vector<MentalStateTriple> ts;
      for (int i = 0; i < n; ++i) ts.push_back(make_triple(who, pick(preds), pick(objects), plot));
      kg.insert_batch(make_batch(who, plot, ts));
      model.apply(who, plot, ts);
      last[who] = plot;
      budget -= n;
    }
    visit(iter, kg, model);
  }
}

Verdict kg_temporal_semantics() {
  Checker c;
  std::size_t queries = 0;
  random_graphs(1000, [&](int iter, const TemporalKG& kg, const evolvtrip::testing::KgModel& model) {
    for (const auto& [who, node] : kg.nodes()) {
      for (int t = 1; t <= kg.plot_count(); ++t) {
        ++queries;
        auto got = ids(kg.state_at(who, t));
        c.expect(got == model.state_at(who, t),
                 "case " + std::to_string(iter) + " " + who + " t=" + std::to_string(t));
        // timeline must agree with state_at: a record is live at t when it
        // started by t and was neither replaced nor retired by t.
        std::vector<std::string> live;
        for (const auto& r : kg.timeline(who)) {
          bool ended = false;
          if (r.replaced_by) ended = kg.find_edge(r.replaced_by->new_id)->plot_index <= t;
          if (r.retired_at) ended = ended || *r.retired_at <= t;
          if (r.plot_index <= t && !ended) live.push_back(r.triple.id);
        }
        std::sort(live.begin(), live.end());
        std::sort(got.begin(), got.end());
        c.expect(live == got, "timeline disagrees, case " + std::to_string(iter) + " " + who);
      }
    }
  });
  return c.verdict("1000 cases, " + std::to_string(queries) + " (character, t) queries, 0 mismatches");
}

Verdict supersession_invariants() {
  Checker c;
  TemporalKG kg("king_lear", 3);
  kg.insert_batch(make_batch("King Lear", 1,
                             {make_triple("King Lear", "BelievesAboutCordelia", "Cordelia loves King Lear", 1),
                              make_triple("King Lear", "FeelsTowardsGoneril", "proud of Goneril", 1),
                              make_triple("King Lear", "IntendsTo", "divide the kingdom", 1)}));
  auto log = kg.insert_batch(
      make_batch("King Lear", 2,
                 {make_triple("King Lear", "BelievesAboutCordelia", "Cordelia does not love King Lear", 2),
                  make_triple("King Lear", "FeelsTowardsGoneril", "proud and grateful toward Goneril", 2)}));
  c.expect(log.count(ChangeKind::Contradicted) == 1 && log.count(ChangeKind::Refined) == 1,
           "fixture did not refine and contradict");
  check_links(kg, c, "fixture");

  std::size_t graphs = 1, links = kg.links().size();
  random_graphs(1000, [&](int iter, const TemporalKG& g, const evolvtrip::testing::KgModel&) {
    ++graphs;
    links += g.links().size();
    check_links(g, c, "random case " + std::to_string(iter));
  });
  return c.verdict(std::to_string(graphs) + " graphs, " + std::to_string(links) + " links");
}

// ---------------------------------------------------------------------------

TomQuestion keyed_question(const std::string& who, Dimension d, char correct) {
  TomQuestion q;
  q.book_id = "book";
  q.plot_index = 1;
  q.character = who;
  q.dimension = d;
  q.id = question_id(q.book_id, 1, who, d);
  q.options = {"a", "b", "c", "d"};
  q.correct = correct;
  return q;
}

Verdict scoring() {
  Checker c;
  {
    std::map<std::string, TomQuestion> key;
    std::vector<Prediction> preds;
    for (int i = 0; i < 10; ++i) {
      auto q = keyed_question("C" + std::to_string(i), Dimension::Belief, 'B');
      key[q.id] = q;
      Prediction p;
      p.question_id = q.id;
      p.model_id = "m";
      if (i < 7) p.letter = 'B';
      else if (i == 7) p.letter = 'C';  // two of the three misses are unparseable
      preds.push_back(p);
    }
    auto table = score(preds, key);
    c.expect(table.rows.size() == 1, "7/10 row count");
    if (!table.rows.empty()) {
      const auto& cell = table.rows[0].cells.at(Dimension::Belief);
      c.expect(cell.correct == 7 && cell.total == 10, "7/10 counts");
      c.expect(text::format_hundredths(cell.percent_hundredths()) == "70.00", "7/10 renders 70.00");
      c.expect(table.rows[0].unparseable == 2, "unparseable count");
    }
  }

  std::mt19937 rng(5);
  for (int iter = 0; iter < 300; ++iter) {
    std::map<std::string, TomQuestion> key;
    std::vector<Prediction> preds;
    const int n = std::uniform_int_distribution<int>(1, 80)(rng);
    for (int i = 0; i < n; ++i) {
      auto q = keyed_question("Q" + std::to_string(i), kAllDimensions[static_cast<std::size_t>(i % 4)],
                              static_cast<char>('A' + std::uniform_int_distribution<int>(0, 3)(rng)));
      key[q.id] = q;
      for (const char* model : {"m1", "m2", "m3"}) {
        Prediction p;
        p.question_id = q.id;
        p.model_id = model;
        p.condition = all_conditions()[static_cast<std::size_t>(std::uniform_int_distribution<int>(0, 3)(rng))];
        const int pick = std::uniform_int_distribution<int>(0, 4)(rng);
        if (pick < 4) p.letter = static_cast<char>('A' + pick);
        preds.push_back(p);
      }
    }
    auto table = score(preds, key);
    for (const auto& row : table.rows) {
      std::int64_t pooled_right = 0, pooled_total = 0;
      for (Dimension d : kAllDimensions) {
        std::int64_t right = 0, total = 0;
        for (const auto& p : preds) {
          const auto& q = key.at(p.question_id);
          if (p.model_id != row.model_id || !(p.condition == row.condition) || q.dimension != d) continue;
          ++total;
          right += p.letter && *p.letter == q.correct;
        }
        auto it = row.cells.find(d);
        const ScoreCell cell = it == row.cells.end() ? ScoreCell{} : it->second;
        c.expect(cell.correct == right && cell.total == total, "recount case " + std::to_string(iter));
        // Display value: half-up to 0.01 from the exact ratio.
        if (total > 0) {
          const std::int64_t want = (right * 20000 + total) / (2 * total);
          c.expect(cell.percent_hundredths() == want, "display rounding case " + std::to_string(iter));
        }
        pooled_right += right;
        pooled_total += total;
      }
      c.expect(row.average().correct == pooled_right && row.average().total == pooled_total,
               "pooled average case " + std::to_string(iter));
    }
  }
  return c.verdict("7/10 -> 70.00, 300 random tables recounted");
}

// ---------------------------------------------------------------------------

struct RunResult {
  int code;
  std::string out;
  std::string err;
};

RunResult cli(const fs::path& out_dir, std::vector<std::string> stage) {
  std::vector<std::string> args = {"-c", (evolvtrip::testing::fixture_dir() / "king_lear/config.json").string(), "-o",
                                   out_dir.string()};
  args.insert(args.end(), stage.begin(), stage.end());
  std::ostringstream out, err;
  const int code = pipeline::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).generic_string()] = evolvtrip::testing::slurp(e.path());
  }
  return files;
}

const std::vector<std::vector<std::string>>& pipeline_stages() {
  static const std::vector<std::vector<std::string>> stages = {
      {"ingest"}, {"extract"}, {"build-kg"}, {"genqa"}, {"eval"}, {"report"}};
  return stages;
}

Verdict determinism() {
  TempDir a("accept_a"), b("accept_b");
  Checker c;
  std::map<std::string, std::string> reports;
  for (const TempDir* dir : {&a, &b}) {
    for (const auto& stage : pipeline_stages()) {
      auto r = cli(dir->path(), stage);
      c.expect(r.code == 0, stage[0] + " exited " + std::to_string(r.code) + ": " + r.err);
      if (stage[0] == "report") reports[dir->path().string()] = r.out;
    }
  }
  auto ta = tree(a.path()), tb = tree(b.path());
  c.expect(!ta.empty(), "no artifacts written");
  for (const auto& [rel, data] : ta) {
    auto it = tb.find(rel);
    c.expect(it != tb.end(), "missing in second run: " + rel);
    if (it != tb.end()) c.expect(it->second == data, "bytes differ: " + rel);
  }
  for (const auto& [rel, data] : tb) c.expect(ta.count(rel) > 0, "missing in first run: " + rel);
  c.expect(reports.size() == 2 && reports.begin()->second == reports.rbegin()->second, "report stdout differs");
  return c.verdict(std::to_string(ta.size()) + " artifacts byte-identical across two runs");
}

// ---------------------------------------------------------------------------

Verdict report_fidelity() {
  // Counts chosen so each cell and the pooled average round to the published
  // GPT-4o-mini figures.
  const std::array<ScoreCell, 4> base = {ScoreCell{397, 596}, ScoreCell{454, 648}, ScoreCell{669, 961},
                                         ScoreCell{405, 564}};
  const std::array<ScoreCell, 4> with = {ScoreCell{460, 642}, ScoreCell{876, 1199}, ScoreCell{265, 358},
                                         ScoreCell{668, 893}};

  // Expand the counts into predictions so the cells come out of score().
  std::map<std::string, TomQuestion> key;
  std::vector<Prediction> preds;
  int serial = 0;
  auto expand = [&](const std::array<ScoreCell, 4>& cells, bool triples) {
    for (std::size_t d = 0; d < 4; ++d) {
      for (std::int64_t i = 0; i < cells[d].total; ++i) {
        auto q = keyed_question("Q" + std::to_string(serial++), kAllDimensions[d], 'A');
        key[q.id] = q;
        Prediction p;
        p.question_id = q.id;
        p.model_id = "GPT-4o-mini";
        p.condition.triples = triples;
        p.letter = i < cells[d].correct ? 'A' : 'B';
        preds.push_back(p);
      }
    }
  };
  expand(base, false);
  expand(with, true);
  ScoreTable table = score(preds, key);

  Checker c;
  c.expect(table.rows.size() == 2, "row count");
  if (table.rows.size() == 2) {
    c.expect(table.rows[0].average().correct == 1925 && table.rows[0].average().total == 2769, "base counts");
  }

  auto csv_rows = text::split(render_report(table, ReportLayout::Csv), '\n');
  for (auto& r : csv_rows) {
    if (!r.empty() && r.back() == '\r') r.pop_back();  // CRLF records
  }
  c.expect(csv_rows.size() >= 3 && csv_rows[1] == "GPT-4o-mini,current,66.61,70.06,69.61,71.81,69.52",
           "csv base row: " + (csv_rows.size() > 1 ? csv_rows[1] : std::string()));
  c.expect(csv_rows.size() >= 3 && csv_rows[2] == "GPT-4o-mini,current+triples,71.65,73.06,74.02,74.80,73.38",
           "csv triple row: " + (csv_rows.size() > 2 ? csv_rows[2] : std::string()));

  // Plain layout: header columns, a model row, then an indented "w Triple" row.
  auto plain = text::split(render_report(table, ReportLayout::Plain), '\n');
  auto tokens = [](const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    for (std::string w; in >> w;) out.push_back(w);
    return out;
  };
  c.expect(plain.size() >= 3, "plain layout too short");
  if (plain.size() >= 3) {
    c.expect(tokens(plain[0]) == std::vector<std::string>{"Model", "Belief", "Desire", "Emotion", "Intention", "Avg"},
             "plain header: " + plain[0]);
    c.expect(tokens(plain[1]) ==
                 std::vector<std::string>{"GPT-4o-mini", "66.61", "70.06", "69.61", "71.81", "69.52"},
             "plain base row: " + plain[1]);
    c.expect(tokens(plain[2]) == std::vector<std::string>{"w", "Triple", "71.65", "73.06", "74.02", "74.80", "73.38"},
             "plain triple row: " + plain[2]);
  }
  auto md = render_report(table, ReportLayout::Markdown);
  c.expect(md.find("| GPT-4o-mini | 66.61 | 70.06 | 69.61 | 71.81 | 69.52 |") != std::string::npos,
           "markdown base row");
  c.expect(md.find("| w Triple | 71.65 | 73.06 | 74.02 | 74.80 | 73.38 |") != std::string::npos,
           "markdown triple row");
  return c.verdict("66.61/70.06/69.61/71.81/69.52 and w Triple row in plain, markdown and csv");
}

// ---------------------------------------------------------------------------

const char* kLearPlot =
    "King Lear decides to divide his kingdom among his three daughters based on their professions of love. Cordelia, "
    "refusing to flatter, is disinherited. Kent is banished for defending her. Lear gives his power to Goneril and "
    "Regan, who soon begin to undermine his authority. The Fool criticizes Lear's actions, and Lear starts to realize "
    "his mistake. Goneril demands Lear reduce his retinue, leading to a heated confrontation. Lear decides to leave "
    "for Regan's castle.";

const char* kLearScenario =
    "The royal court is assembled in a grand hall, filled with tension and anticipation. Ornate tapestries and gilded "
    "decorations surround the throne where King Lear sits, preparing to divide his kingdom. Goneril and Regan have "
    "already delivered their exaggerated declarations of love, receiving large portions of the kingdom. Now, all eyes "
    "are on Cordelia, the youngest daughter, as she prepares to speak. The atmosphere is charged with expectation, "
    "silence hanging heavy as courtiers watch the pivotal moment that will determine the future of the kingdom.";

// The training example's input block, transcribed line for line.
std::string training_example_input() {
  return std::string(
             "You are an expert in narrative analysis and character psychology, specializing in Theory of Mind (ToM). "
             "Your task is to analyze the mental states of characters in literary works.\n"
             "\n"
             "For the character King Lear in the book King Lear, analyze their mental state based on the following "
             "context:\n"
             "\n"
             "STORY PLOT:\n") +
         kLearPlot +
         "\n"
         "\n"
         "SCENARIO:\n" +
         kLearScenario +
         "\n"
         "\n"
         "QUESTION:\n"
         "What does King Lear believe about Cordelia's profession of love?\n"
         "\n"
         "CANDIDATE CHOICES:\n"
         "A. He believes she is jesting and will eventually flatter him.\n"
         "B. He believes she is being honest and true to herself.\n"
         "C. He believes she is intentionally defying him out of spite.\n"
         "D. He believes she is confused and doesn't understand the situation.\n"
         "\n"
         "First, identify the relevant mental state triples (beliefs, emotions, intentions, or desires) that explain "
         "King Lear's psychology in this scenario.\n"
         "Then, based on these mental states, select the most appropriate answer from the choices above.\n"
         "\n"
         "Format your response as:\n"
         "1. List the relevant mental state triples\n"
         "2. Provide your answer as a JSON object: {answer: X} where X is the letter (A, B, C, or D) of the correct "
         "choice.    \n";
}

Verdict finetune_format() {
  Corpus corpus;
  Book book;
  book.id = "king_lear";
  book.title = "King Lear";
  Plot plot;
  plot.book_id = book.id;
  plot.index = 1;
  plot.summary = kLearPlot;
  plot.scenario = kLearScenario;
  Conversation conv;
  conv.book_id = book.id;
  conv.plot_index = 1;
  conv.environment = "King Lear's grand hall";
  conv.turns = {parse_turn("King Lear: Tell me, my daughters.").turn, parse_turn("Cordelia: Nothing, my lord.").turn};
  plot.conversations = {conv};
  book.plots = {plot};
  corpus.books = {book};

  TemporalKG kg("king_lear", 1);
  const std::vector<MentalStateTriple> lear = {
      make_triple("King Lear", "DesiresToKnow", "which daughter loves King Lear most", 1),
      make_triple("King Lear", "BelievesAboutCordelia", "Cordelia's silence is a sign of defiance and disrespect", 1)};
  kg.insert_batch(make_batch("King Lear", 1, lear));
  KgIndex kgs{{"king_lear", &kg}};

  TomQuestion q;
  q.book_id = "king_lear";
  q.plot_index = 1;
  q.character = "King Lear";
  q.dimension = Dimension::Belief;
  q.id = question_id(q.book_id, 1, q.character, q.dimension);
  q.stem = "What does King Lear believe about Cordelia's profession of love?";
  q.options = {"He believes she is jesting and will eventually flatter him.",
               "He believes she is being honest and true to herself.",
               "He believes she is intentionally defying him out of spite.",
               "He believes she is confused and doesn't understand the situation."};
  q.correct = 'B';
  q.state = QuestionState::HumanVerified;

  Checker c;
  auto with = emit_example(q, corpus, kgs, true);
  auto without = emit_example(q, corpus, kgs, false);
  c.expect(pin_whitespace(with.input) == pin_whitespace(training_example_input()), "input block differs from the transcription");
  c.expect(with.input == without.input, "inputs differ between with and without triples");
  c.expect(without.output == "Answer:\n{answer: B}", "output without triples: " + without.output);
  c.expect(with.output ==
               "Relevant mental state triples:\n"
               "(King Lear, DesiresToKnow, which daughter loves King Lear most)\n"
               "(King Lear, BelievesAboutCordelia, Cordelia's silence is a sign of defiance and disrespect)\n"
               "Answer:\n{answer: B}",
           "output with triples: " + with.output);
  return c.verdict("input and both output blocks verbatim");
}

// ---------------------------------------------------------------------------

Verdict benchmark_invariants() {
  Checker c;
  TempDir dir("accept_qa");
  for (const auto& stage : std::vector<std::vector<std::string>>{{"ingest"}, {"extract"}, {"build-kg"}, {"genqa"},
                                                                  {"verify"}}) {
    auto r = cli(dir.path(), stage);
    c.expect(r.code == 0, stage[0] + " exited " + std::to_string(r.code) + ": " + r.err);
  }
  auto questions = questions_from_jsonl(evolvtrip::testing::slurp(dir / "questions/questions.jsonl"));
  c.expect(!questions.empty(), "no questions generated");

  std::size_t distractors = 0;
  for (const auto& q : questions) {
    c.expect(q.options.size() == 4, q.id + ": option count");
    c.expect(q.correct >= 'A' && q.correct <= 'D', q.id + ": correct label");
    std::set<std::string> distinct(q.options.begin(), q.options.end());
    c.expect(distinct.size() == 4, q.id + ": duplicate options");
    std::size_t right = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      if (static_cast<char>('A' + i) == q.correct) ++right;
      else ++distractors;
    }
    c.expect(right == 1, q.id + ": correct count");
    try {
      check_question(q);
    } catch (const Error& e) {
      c.expect(false, q.id + ": " + e.detail());
    }
  }
  c.expect(distractors == 3 * questions.size(), "distractor total");

  // Random verdict sequences against the transition table.
  const std::set<std::pair<QuestionState, QuestionState>> legal = {
      {QuestionState::Generated, QuestionState::LlmVerified}, {QuestionState::Generated, QuestionState::Rejected},
      {QuestionState::LlmVerified, QuestionState::HumanVerified}, {QuestionState::LlmVerified, QuestionState::Rejected},
      {QuestionState::Rejected, QuestionState::Generated}};
  const std::array<QuestionState, 4> all = {QuestionState::Generated, QuestionState::LlmVerified,
                                            QuestionState::HumanVerified, QuestionState::Rejected};
  std::mt19937 rng(404);
  for (int iter = 0; iter < 2000; ++iter) {
    TomQuestion q = questions.empty() ? TomQuestion{} : questions[static_cast<std::size_t>(iter) % questions.size()];
    q.state = QuestionState::Generated;
    q.attempt = 1;
    QuestionState state = QuestionState::Generated;
    int attempt = 1;
    for (int step = 0; step < 16; ++step) {
      const QuestionState to = all[std::uniform_int_distribution<std::size_t>(0, 3)(rng)];
      const bool ok = legal.count({state, to}) > 0;
      c.expect(transition_allowed(state, to) == ok, "transition_allowed disagrees with the table");
      bool threw = false;
      try {
        transition(q, to);
      } catch (const Error& e) {
        threw = e.code() == ErrorCode::IllegalTransition;
      }
      c.expect(threw == !ok, "transition outcome disagrees with the table");
      if (ok) {
        if (state == QuestionState::Rejected) ++attempt;
        state = to;
      }
      c.expect(q.state == state && q.attempt == attempt, "state or attempt drifted");
    }
  }
  return c.verdict(std::to_string(questions.size()) + " questions, " + std::to_string(distractors) +
                   " distractors, 2000 verdict sequences");
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& benchmark_books() {
  static const std::vector<std::string> books = {"King Lear",
                                                 "A Study in Scarlet (Sherlock Holmes, #1)",
                                                 "The Scarlet Letter",
                                                 "The Taming of the Shrew",
                                                 "The Merchant of Venice",
                                                 "The Tempest",
                                                 "Julius Caesar",
                                                 "The Call of the Wild",
                                                 "A Portrait of the Artist as a Young Man",
                                                 "The Wind in the Willows",
                                                 "A Little Princess",
                                                 "The Importance of Being Earnest",
                                                 "Othello",
                                                 "Dr Jekyll and Mr Hyde",
                                                 "The Hound of the Baskervilles",
                                                 "Notes from Underground",
                                                 "The Turn of the Screw",
                                                 "Jude the Obscure",
                                                 "Siddhartha",
                                                 "Anthem"};
  return books;
}

std::optional<fs::path> coser_dir() {
  const char* dir = std::getenv("EVOLVTRIP_COSER_DIR");
  if (dir == nullptr || *dir == '\0') return std::nullopt;
  return fs::path(dir);
}

Corpus load_benchmark_books(const fs::path& dir) {
  IngestOptions opts;
  opts.only_books = benchmark_books();
  opts.threads = 4;
  return ingest_corpus(dir, opts);
}

Verdict corpus_statistics() {
  auto dir = coser_dir();
  if (!dir) return {Outcome::Skip, "set EVOLVTRIP_COSER_DIR to the CoSER-Gutenberg book files"};
  Corpus corpus = load_benchmark_books(*dir);
  Checker c;
  for (const auto& title : benchmark_books()) c.expect(corpus.find_book(title) != nullptr, "book not found: " + title);

  auto render = [](const CountStats& s) {
    return std::to_string(s.plots) + "/" + std::to_string(s.conversations) + "/" +
           text::format_hundredths(s.avg_speakers_hundredths());
  };
  auto detail = [&](const CountStats& s) {
    return render(s) + " (conversations per plot " + text::format_hundredths(s.conversations_per_plot_hundredths()) +
           ")";
  };
  auto all = corpus_stats(corpus);
  c.expect(render(all.total) == "258/599/2.47", "total " + detail(all.total));

  Corpus ood;
  for (const auto& title : SplitSpec::benchmark_default().ood_books) {
    if (const Book* b = corpus.find_book(title)) ood.books.push_back(*b);
  }
  auto sub = corpus_stats(ood);
  c.expect(render(sub.total) == "93/204/2.19", "ood " + detail(sub.total));
  return c.verdict("total " + detail(all.total) + ", ood " + detail(sub.total));
}

Verdict prompt_lengths() {
  auto dir = coser_dir();
  if (!dir) return {Outcome::Skip, "set EVOLVTRIP_COSER_DIR to the CoSER-Gutenberg book files"};
  Corpus corpus = load_benchmark_books(*dir);

  // One four-option question per (plot, speaker); option text is a typical length.
  std::int64_t standard = 0, extended = 0, n = 0;
  for (const auto& book : corpus.books) {
    for (const auto& plot : book.plots) {
      for (const auto& who : plot.speakers()) {
        TomQuestion q;
        q.book_id = book.id;
        q.plot_index = plot.index;
        q.character = who;
        q.stem = "What does " + who + " believe about the situation at this point in the story?";
        q.options = {"They believe the situation is under their control.", "They believe they have been betrayed.",
                     "They believe the outcome no longer matters.", "They believe someone else is to blame."};
        standard += assemble_context(q, corpus, {}, {ContextMode::CurrentPlot, false}).token_estimate;
        extended += assemble_context(q, corpus, {}, {ContextMode::CurrentPlusPrevSummaries, false}).token_estimate;
        ++n;
      }
    }
  }
  if (n == 0) return {Outcome::Advisory, "no prompts assembled"};
  const double s = static_cast<double>(standard) / static_cast<double>(n);
  const double e = static_cast<double>(extended) / static_cast<double>(n);
  auto within = [](double v, double ref) { return v >= ref * 0.85 && v <= ref * 1.15; };
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(0);
  o << "standard mean " << s << (within(s, 2109) ? " within" : " outside") << " 15% of 2109, extended mean " << e
    << (within(e, 4524) ? " within" : " outside") << " 15% of 4524";
  return {Outcome::Advisory, o.str()};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "dialogue parsing golden lines", 1.0, dialogue_parsing},
      {2, "King Lear triple output parsing", 1.0, triple_parsing},
      {3, "temporal KG state_at and timeline vs oracle", 30.0, kg_temporal_semantics},
      {4, "supersession links time-increasing and acyclic", 0.0, supersession_invariants},
      {5, "scoring recount", 0.0, scoring},
      {6, "end-to-end determinism under replay", 120.0, determinism},
      {7, "report reproduces the GPT-4o-mini row", 0.0, report_fidelity},
      {8, "fine-tune example format", 0.0, finetune_format},
      {9, "question set and state machine invariants", 0.0, benchmark_invariants},
      {10, "corpus statistics on the 20 books", 60.0, corpus_statistics},
      {11, "prompt token estimates (non-binding)", 0.0, prompt_lengths},
  };

  int failed = 0;
  for (const auto& cr : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = cr.run();
    } catch (const Error& e) {
      v = {Outcome::Fail, "unexpected error: " + e.detail()};
    } catch (const std::exception& e) {
      v = {Outcome::Fail, std::string("unexpected exception: ") + e.what()};
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (v.outcome == Outcome::Pass && cr.budget_s > 0 && elapsed > cr.budget_s) {
      v = {Outcome::Fail, "took " + seconds(elapsed) + ", budget " + seconds(cr.budget_s)};
    }
    const char* label = v.outcome == Outcome::Pass   ? "PASS"
                        : v.outcome == Outcome::Fail ? "FAIL"
                        : v.outcome == Outcome::Skip ? "SKIP"
                                                     : "ADVISORY";
    if (v.outcome == Outcome::Fail) ++failed;
    std::cout << label << "  [" << cr.number << "] " << cr.name << " (" << seconds(elapsed) << "): " << v.detail
              << std::endl;
  }
  std::cout << (failed == 0 ? "acceptance: all binding criteria met" : "acceptance: failures present") << std::endl;
  return failed == 0 ? 0 : 1;
}
