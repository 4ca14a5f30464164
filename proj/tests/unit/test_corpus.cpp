#include <doctest.h>

#include <random>
#include <set>

#include "evolvtrip/corpus.hpp"
#include "evolvtrip/error.hpp"
#include "test_support.hpp"

using namespace evolvtrip;
using evolvtrip::testing::TempDir;

namespace {

UtteranceSegment seg(SegmentKind k, std::string t) { return {k, std::move(t)}; }

std::string random_words(std::mt19937& rng) {
  static const char* kWords[] = {"love", "Cordelia,", "nothing", "my", "lord.", "I", "must", "know", "silent!", "thy"};
  int n = std::uniform_int_distribution<int>(1, 5)(rng);
  std::string out;
  for (int i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += kWords[std::uniform_int_distribution<int>(0, 9)(rng)];
  }
  return out;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::IoError;
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("dialogue lines from the extraction example") {
    auto lear = parse_turn(
        "King Lear: [I must know which daughter loves me most.] Tell me, my daughters, which of you shall we say "
        "doth love us most?");
    CHECK(lear.turn.speaker == "King Lear");
    CHECK(lear.turn.segments ==
          std::vector<UtteranceSegment>{
              seg(SegmentKind::Thought, "I must know which daughter loves me most."),
              seg(SegmentKind::Speech, "Tell me, my daughters, which of you shall we say doth love us most?")});
    CHECK(lear.warnings.empty());

    auto cordelia = parse_turn("Cordelia: (remains silent)");
    CHECK(cordelia.turn.speaker == "Cordelia");
    CHECK(cordelia.turn.segments == std::vector<UtteranceSegment>{seg(SegmentKind::Action, "remains silent")});

    auto kent = parse_turn("Kent: My lord.");
    CHECK(kent.turn.segments == std::vector<UtteranceSegment>{seg(SegmentKind::Speech, "My lord.")});
  }

  TEST_CASE("mixed segments keep source order") {
    auto t = parse_turn("Cordelia: Nothing, my lord. (lowers her eyes) [He will not hear me.] I love your majesty.");
    REQUIRE(t.turn.segments.size() == 4);
    CHECK(t.turn.segments[0] == seg(SegmentKind::Speech, "Nothing, my lord."));
    CHECK(t.turn.segments[1] == seg(SegmentKind::Action, "lowers her eyes"));
    CHECK(t.turn.segments[2] == seg(SegmentKind::Thought, "He will not hear me."));
    CHECK(t.turn.segments[3] == seg(SegmentKind::Speech, "I love your majesty."));
  }

  TEST_CASE("degraded delimiters become speech with a warning") {
    auto unbalanced = parse_turn("Fool: (laughs and says nothing");
    CHECK(unbalanced.turn.segments == std::vector<UtteranceSegment>{seg(SegmentKind::Speech, "(laughs and says nothing")});
    CHECK(unbalanced.warnings.size() == 1);

    auto nested = parse_turn("Fool: [a (b) c] done");
    CHECK(nested.turn.segments.size() == 1);
    CHECK(nested.turn.segments[0].kind == SegmentKind::Speech);
    CHECK_FALSE(nested.warnings.empty());
  }

  TEST_CASE("missing speaker prefix") {
    CHECK(code_of([] { parse_turn("no colon here"); }) == ErrorCode::NoSpeaker);
    CHECK(code_of([] { parse_turn(": empty speaker"); }) == ErrorCode::NoSpeaker);
  }

  TEST_CASE("segmentation round-trips through the delimited rendering") {
    std::mt19937 rng(11);
    for (int iter = 0; iter < 2000; ++iter) {
      Turn turn;
      turn.speaker = "Speaker";
      int n = std::uniform_int_distribution<int>(1, 6)(rng);
      for (int i = 0; i < n; ++i) {
        auto kind = static_cast<SegmentKind>(std::uniform_int_distribution<int>(0, 2)(rng));
        // adjacent speech runs are one segment by definition
        if (kind == SegmentKind::Speech && !turn.segments.empty() && turn.segments.back().kind == SegmentKind::Speech) {
          kind = SegmentKind::Action;
        }
        turn.segments.push_back(seg(kind, random_words(rng)));
      }
      auto parsed = parse_turn(turn.speaker + ": " + turn.utterance());
      REQUIRE(parsed.turn == turn);
      REQUIRE(parsed.warnings.empty());
    }
  }

  TEST_CASE("alias resolution") {
    CharacterRegistry reg;
    reg.add_alias("King Lear", "Lear");
    CHECK(reg.resolve("Lear") == "King Lear");
    CHECK(reg.resolve("  king   lear ") == "King Lear");
    CHECK(reg.resolve("Oswald") == "Oswald");
    CHECK(reg.contains("oswald"));

    reg.add_alias("King Lear", "the King");
    reg.add_alias("King of France", "the King");
    CHECK(code_of([&] { reg.resolve("the King"); }) == ErrorCode::AmbiguousAlias);
    CHECK(reg.resolve("Lear") == "King Lear");
  }

  TEST_CASE("alias table file") {
    auto tables = parse_alias_table(
        "# comment\n"
        "book: king_lear\n"
        "King Lear = Lear, the King\n"
        "\n"
        "book: other\n"
        "Kent = Caius\n");
    REQUIRE(tables.size() == 2);
    CHECK(tables.at("king_lear").lookup("the king") == std::optional<std::string>("King Lear"));
    CHECK(tables.at("other").lookup("Caius") == std::optional<std::string>("Kent"));
    CHECK_FALSE(tables.at("king_lear").lookup("Caius").has_value());
  }

  TEST_CASE("fixture ingests with three plots") {
    auto aliases = load_alias_table(evolvtrip::testing::fixture_dir() / "king_lear/aliases.txt");
    IngestOptions opts;
    opts.aliases = &aliases;
    Corpus c = ingest_corpus(evolvtrip::testing::fixture_dir() / "king_lear/king_lear.json", opts);
    REQUIRE(c.books.size() == 1);
    const Book& b = c.books[0];
    CHECK(b.id == "king_lear");
    CHECK(b.title == "King Lear");
    REQUIRE(b.plots.size() == 3);
    CHECK(b.plots[0].speakers() == std::vector<std::string>{"King Lear", "Goneril", "Cordelia", "Regan"});
    CHECK_FALSE(b.plots[1].has_speaker("Cordelia"));
    CHECK_FALSE(b.plots[0].conversations[0].environment.empty());
    CHECK(c.find_book("King Lear") == &c.books[0]);
    CHECK(c.find_plot("king_lear", 2) == &b.plots[1]);
    CHECK(c.find_plot("king_lear", 9) == nullptr);
  }

  TEST_CASE("speaker aliases are canonicalized during ingest") {
    TempDir dir("alias");
    evolvtrip::testing::spit(dir / "lear.json", R"js({"book": "Lear Test", "plots": [{"summary": "s", "scenario": "x",
      "conversation": [{"scenario": "x", "dialogues": ["Lear: Speak.", "the King: (sits)", "Cordelia: Nothing."]}]}]})js");
    evolvtrip::testing::spit(dir / "aliases.txt", "book: lear\nKing Lear = Lear, the King\n");
    auto aliases = load_alias_table(dir / "aliases.txt");
    IngestOptions opts;
    opts.aliases = &aliases;
    Corpus c = ingest_corpus(dir / "lear.json", opts);
    CHECK(c.books[0].plots[0].speakers() == std::vector<std::string>{"King Lear", "Cordelia"});
  }

  TEST_CASE("normalized corpus round-trips") {
    Corpus c = ingest_corpus(evolvtrip::testing::fixture_dir() / "king_lear/king_lear.json");
    TempDir dir("rt");
    write_corpus(c, dir.path());
    IngestOptions opts;
    opts.format = CorpusFormat::NormalizedJsonl;
    Corpus back = ingest_corpus(dir.path(), opts);
    CHECK(back == c);
  }

  TEST_CASE("ingest errors") {
    TempDir empty("empty");
    CHECK(code_of([&] { ingest_corpus(empty.path()); }) == ErrorCode::UnreadableSource);
    CHECK(code_of([&] { ingest_corpus(empty / "missing.json"); }) == ErrorCode::UnreadableSource);
    evolvtrip::testing::spit(empty / "bad.json", R"({"book": "Bad"})");
    CHECK(code_of([&] { ingest_corpus(empty / "bad.json"); }) == ErrorCode::MalformedRecord);
  }

  TEST_CASE("single plot fixture counts") {
    TempDir dir("one");
    evolvtrip::testing::spit(dir / "one.json", R"js({"book": "One", "plots": [{"summary": "s", "scenario": "x",
      "conversation": [{"scenario": "x", "dialogues": ["A: hi", "B: hello", "A: bye"]}]}]})js");
    auto report = corpus_stats(ingest_corpus(dir / "one.json"));
    CHECK(report.total.plots == 1);
    CHECK(report.total.conversations == 1);
    CHECK(report.total.avg_speakers_hundredths() == 200);
  }

  TEST_CASE("stats agree with a brute-force recount") {
    Corpus c = ingest_corpus(evolvtrip::testing::fixture_dir() / "king_lear/king_lear.json");
    auto report = corpus_stats(c);
    std::int64_t plots = 0, convs = 0, slots = 0;
    for (const auto& b : c.books) {
      for (const auto& p : b.plots) {
        ++plots;
        for (const auto& conv : p.conversations) {
          ++convs;
          std::set<std::string> names;
          for (const auto& t : conv.turns) names.insert(t.speaker);
          slots += static_cast<std::int64_t>(names.size());
        }
      }
    }
    CHECK(report.total.plots == plots);
    CHECK(report.total.conversations == convs);
    CHECK(report.total.speaker_slots == slots);
    // 4 + 3 + 2 speakers over 3 conversations
    CHECK(report.total.avg_speakers_hundredths() == 300);

    auto empty = corpus_stats(Corpus{});
    CHECK_FALSE(empty.total.mean_defined());
    CHECK(empty.total.avg_speakers_hundredths() == 0);
  }
}
