#include <doctest.h>

#include <map>
#include <random>

#include "evolvtrip/triples.hpp"
#include "test_support.hpp"

using namespace evolvtrip;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::IoError;
}

// King Lear output from the extraction prompt's worked example, verbatim
// including the doubled braces.
const char* kLearOutput = R"({{
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

const Plot& fixture_plot(int index) {
  static const Corpus corpus = ingest_corpus(evolvtrip::testing::fixture_dir() / "king_lear/king_lear.json");
  return *corpus.find_plot("king_lear", index);
}

}  // namespace

TEST_SUITE("triples") {
  TEST_CASE("dimension classification") {
    CHECK(classify_dimension("BelievesAboutCordelia") == Dimension::Belief);
    CHECK(classify_dimension("believes") == Dimension::Belief);
    CHECK(classify_dimension("DesiresToKnow") == Dimension::Desire);
    CHECK(classify_dimension("FeelsTowards") == Dimension::Emotion);
    CHECK(classify_dimension("IntendsTo") == Dimension::Intention);
    CHECK(classify_dimension("Intends to seek") == Dimension::Intention);
    CHECK(code_of([] { classify_dimension("Hopes"); }) == ErrorCode::UnknownPredicate);
    CHECK(code_of([] { classify_dimension("Knows"); }) == ErrorCode::UnknownPredicate);
    CHECK_FALSE(try_classify_dimension("").has_value());
  }

  TEST_CASE("targets named in compound predicates") {
    const std::vector<std::pair<std::string, std::optional<std::string>>> table = {
        {"BelievesAboutCordelia", "Cordelia"},
        {"FeelsTowardsCordelia", "Cordelia"},
        {"FeelsTowardGoneril", "Goneril"},
        {"FeelsAngerTowardsGoneril", "Goneril"},
        {"BelievesAboutKingLear", "King Lear"},
        {"DesiresToKnow", std::nullopt},
        {"IntendsTo", std::nullopt},
        {"IntendsToSeek", std::nullopt},
        {"Desires", std::nullopt},
        {"BelievesAbout", std::nullopt},
        {"FeelsTowards", std::nullopt},
    };
    for (const auto& [pred, want] : table) {
      CAPTURE(pred);
      CHECK(extract_target(pred) == want);
    }
  }

  TEST_CASE("the worked King Lear output parses to six triples") {
    auto parsed = parse_triple_response(kLearOutput, 1);
    CHECK(parsed.key == "Target Character");
    CHECK(parsed.malformed.empty());
    CHECK(parsed.unknown_predicate.empty());
    REQUIRE(parsed.triples.size() == 6);

    std::map<Dimension, int> dims;
    for (const auto& t : parsed.triples) {
      CHECK(t.subject == "King Lear");
      CHECK(t.plot_index == 1);
      ++dims[t.dimension];
    }
    CHECK(dims[Dimension::Belief] == 2);
    CHECK(dims[Dimension::Emotion] == 2);
    CHECK(dims[Dimension::Desire] == 1);
    CHECK(dims[Dimension::Intention] == 1);

    CHECK(parsed.triples[0].predicate_raw == "DesiresToKnow");
    CHECK(parsed.triples[0].object == "which daughter loves King Lear most");
    CHECK_FALSE(parsed.triples[0].target.has_value());
    CHECK(parsed.triples[2].target == std::optional<std::string>("Cordelia"));
    CHECK(parsed.triples[4].target == std::optional<std::string>("Goneril"));
    CHECK(parsed.triples[5].object == "disappointed and shocked by Cordelia's honesty");
  }

  TEST_CASE("commas after the second separator belong to the object") {
    auto parts = split_triple_entry("(Cordelia, FeelsTowardsKingLear, sorrowful, loving, and resolute)");
    REQUIRE(parts.has_value());
    CHECK((*parts)[0] == "Cordelia");
    CHECK((*parts)[1] == "FeelsTowardsKingLear");
    CHECK((*parts)[2] == "sorrowful, loving, and resolute");
    CHECK_FALSE(split_triple_entry("(Cordelia, Feels)").has_value());
  }

  TEST_CASE("malformed and unknown entries are quarantined") {
    auto parsed = parse_triple_response(
        "{\"Cordelia\": [\"(Cordelia, Feels, sad)\", \"(Cordelia, Hopes, for reconciliation)\", "
        "\"(Cordelia only)\"]}",
        3);
    CHECK(parsed.key == "Cordelia");
    CHECK(parsed.triples.size() == 1);
    CHECK(parsed.unknown_predicate.size() == 1);
    CHECK(parsed.malformed.size() == 1);

    auto fenced = parse_triple_response("```json\n{\"Target Character\": [\"(Kent, IntendsTo, serve)\"]}\n```");
    CHECK(fenced.triples.size() == 1);

    CHECK(code_of([] { parse_triple_response("I cannot help with that."); }) == ErrorCode::UnparseableResponse);
  }

  TEST_CASE("render then parse is the identity") {
    std::mt19937 rng(5);
    const std::vector<std::string> subjects = {"King Lear", "Cordelia", "Kent", "Earl of Gloucester"};
    const std::vector<std::string> preds = {"Believes", "BelievesAboutCordelia", "DesiresToKnow", "FeelsTowardsKent",
                                            "IntendsTo", "Feels"};
    const std::vector<std::string> words = {"the", "kingdom,", "is", "lost", "love", "(truly)", "Cordelia's", "honour"};
    for (int iter = 0; iter < 300; ++iter) {
      std::vector<MentalStateTriple> batch;
      int n = std::uniform_int_distribution<int>(1, 8)(rng);
      for (int i = 0; i < n; ++i) {
        std::string obj;
        int w = std::uniform_int_distribution<int>(1, 6)(rng);
        for (int k = 0; k < w; ++k) {
          if (k) obj += ' ';
          obj += words[std::uniform_int_distribution<std::size_t>(0, words.size() - 1)(rng)];
        }
        if (obj.back() == ',') obj.pop_back();
        auto t = make_triple(subjects[std::uniform_int_distribution<std::size_t>(0, subjects.size() - 1)(rng)],
                             preds[std::uniform_int_distribution<std::size_t>(0, preds.size() - 1)(rng)], obj, 2);
        t.id = "t" + std::to_string(i + 1);
        batch.push_back(t);
      }
      auto parsed = parse_triple_response(render_batch_response(batch), 2);
      REQUIRE(parsed.triples == batch);
    }
  }

  TEST_CASE("triple validation") {
    std::set<std::string> cast = {"King Lear", "Cordelia", "Goneril"};
    auto ok = make_triple("King Lear", "BelievesAboutCordelia", "Cordelia's silence is defiance", 1);
    CHECK(validate_triple(ok, "King Lear", cast).empty());

    auto pronoun = make_triple("King Lear", "FeelsTowardsCordelia", "wounded by her refusal", 1);
    CHECK(validate_triple(pronoun, "King Lear", cast) == std::vector<Violation>{Violation::PronounInObject});
    CHECK_FALSE(contains_pronoun("Theodore's hermit"));
    CHECK(contains_pronoun("They leave"));

    auto wrong = make_triple("Cordelia", "FeelsTowardsEdmund", "wary", 1);
    CHECK(validate_triple(wrong, "King Lear", cast) ==
          std::vector<Violation>{Violation::SubjectMismatch, Violation::UnknownTarget});

    CharacterRegistry reg;
    reg.add_alias("King Lear", "Lear");
    auto alias = make_triple("Lear", "Feels", "proud", 1);
    CHECK(validate_triple(alias, "King Lear", cast, &reg).empty());

    auto tampered = ok;
    tampered.dimension = Dimension::Desire;
    CHECK(validate_triple(tampered, "King Lear", cast) == std::vector<Violation>{Violation::DimensionMismatch});
  }

  TEST_CASE("extraction prompt carries every section") {
    const Plot& plot = fixture_plot(1);
    std::vector<MentalStateTriple> prev = {make_triple("Cordelia", "Feels", "anxious", 1)};
    GenerationSettings s;
    s.model_id = "gpt-4o";
    s.seed = 9;
    auto req = build_extraction_prompt(plot, plot.conversations, "Cordelia", prev, s);
    CHECK(req.model_id == "gpt-4o");
    CHECK(req.seed == std::optional<std::int64_t>(9));
    const std::string p = req.prompt_text();
    CHECK(p.find(plot.summary) != std::string::npos);
    CHECK(p.find(plot.scenario) != std::string::npos);
    CHECK(p.find("# Target Character: Cordelia") != std::string::npos);
    CHECK(p.find("(Cordelia, Feels, anxious)") != std::string::npos);
    CHECK(p.find(render_dialogues(plot.conversations)) != std::string::npos);

    const Plot& absent = fixture_plot(2);
    CHECK(code_of([&] { build_extraction_prompt(absent, absent.conversations, "Cordelia", {}, s); }) ==
          ErrorCode::CharacterAbsent);
  }

  TEST_CASE("visible cast follows shared conversations") {
    Plot plot;
    plot.index = 1;
    Conversation a, b;
    a.turns = {parse_turn("Kent: Sir.").turn, parse_turn("King Lear: Out!").turn};
    b.turns = {parse_turn("Edmund: Now, gods.").turn};
    plot.conversations = {a, b};
    CHECK(visible_cast(plot, "Kent") == std::set<std::string>{"Kent", "King Lear"});
    CHECK(visible_cast(plot, "Edmund") == std::set<std::string>{"Edmund"});
  }

  TEST_CASE("json round trip") {
    auto t = make_triple("King Lear", "BelievesAboutCordelia", "defiant", 2);
    t.id = "king_lear:2:king_lear:1";
    t.status = TripleStatus::Superseded;
    t.supersedes = "e1";
    CHECK(MentalStateTriple::from_json(t.to_json()) == t);
  }
}
