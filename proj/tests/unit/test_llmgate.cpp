#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <random>
#include <thread>

#include <httplib.h>

#include "evolvtrip/llmgate.hpp"
#include "test_support.hpp"

using namespace evolvtrip;
using evolvtrip::testing::TempDir;
using nlohmann::json;

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

// Echoes the prompt back; fails the first `fail_first` calls.
class ScriptedBackend final : public ChatBackend {
 public:
  int fail_first = 0;
  bool rate_limited = false;
  bool transient = true;
  std::chrono::milliseconds hold{0};
  std::atomic<int> calls{0};
  std::atomic<int> active{0};
  std::atomic<int> peak{0};

  ChatResponse complete(const ChatRequest& request) override {
    int n = ++calls;
    int now_active = ++active;
    int prev = peak.load();
    while (now_active > prev && !peak.compare_exchange_weak(prev, now_active)) {
    }
    if (hold.count() > 0) std::this_thread::sleep_for(hold);
    --active;
    if (n <= fail_first) {
      throw BackendFailure(ErrorCode::TransportError, "flaky", transient, rate_limited);
    }
    ChatResponse r;
    r.text = "echo:" + request.messages.back().content;
    r.backend_id = "scripted";
    return r;
  }
  std::string id() const override { return "scripted"; }
};

BackendConfig fast_config() {
  BackendConfig c;
  c.max_in_flight = 4;
  c.requests_per_minute = 100000;
  c.retry.base_backoff = std::chrono::milliseconds(500);
  return c;
}

}  // namespace

TEST_SUITE("llmgate") {
  TEST_CASE("request digest is stable and sensitive to every field") {
    ChatRequest base = make_request("gpt-4o-mini", "Who is Cordelia?", 0.0, 256, 7);
    CHECK(base.digest() == make_request("gpt-4o-mini", "Who is Cordelia?", 0.0, 256, 7).digest());
    CHECK(base.digest().size() == 64);

    std::vector<ChatRequest> variants(6, base);
    variants[0].model_id = "llama-3.1-8b-instruct";
    variants[1].messages[0].content += " ";
    variants[2].temperature = 0.7;
    variants[3].max_output_tokens = 257;
    variants[4].seed = std::nullopt;
    variants[5].messages.insert(variants[5].messages.begin(), ChatMessage{Role::System, "be brief"});
    std::set<std::string> digests{base.digest()};
    for (const auto& v : variants) digests.insert(v.digest());
    CHECK(digests.size() == variants.size() + 1);

    std::mt19937 rng(3);
    for (int i = 0; i < 300; ++i) {
      std::string prompt(std::uniform_int_distribution<int>(1, 40)(rng), 'a');
      for (auto& ch : prompt) ch = static_cast<char>('a' + std::uniform_int_distribution<int>(0, 25)(rng));
      auto r = make_request("m", prompt);
      auto flipped = prompt;
      auto pos = std::uniform_int_distribution<std::size_t>(0, prompt.size() - 1)(rng);
      flipped[pos] = flipped[pos] == 'z' ? 'y' : 'z';
      REQUIRE(r.digest() == make_request("m", prompt).digest());
      REQUIRE(r.digest() != make_request("m", flipped).digest());
    }
  }

  TEST_CASE("request validation") {
    CHECK_NOTHROW(make_request("m", "hi").validate());
    CHECK(code_of([] { make_request("m", "hi", 2.5).validate(); }) == ErrorCode::InvalidRequest);
    CHECK(code_of([] { make_request("m", "hi", 0.0, 0).validate(); }) == ErrorCode::InvalidRequest);
    ChatRequest no_user;
    no_user.model_id = "m";
    no_user.messages.push_back({Role::System, "only system"});
    CHECK(code_of([&] { no_user.validate(); }) == ErrorCode::InvalidRequest);
  }

  TEST_CASE("token estimate") {
    CHECK(estimate_tokens("") == 0);
    CHECK(estimate_tokens(std::string(4000, 'x')) == 1000);
    CHECK(estimate_tokens("abcde") == 2);
  }

  TEST_CASE("replay lookup order") {
    ChatRequest req = make_request("gpt-4o-mini", "Tell me about Cordelia and Lear.");
    std::string script = json{{"prompt_pattern", json::array({"Cordelia", "Lear"})}, {"response_text", "pattern"}}.dump() +
                         "\n" + json{{"digest", req.digest()}, {"response_text", "exact"}}.dump() + "\n" +
                         json{{"prompt_pattern", "Kent"}, {"model", "llama"}, {"response_text", "kent-llama"}}.dump() +
                         "\n" + json{{"prompt_pattern", "Kent"}, {"response_text", "kent-any"}}.dump() + "\n";
    auto s = ReplayScript::parse(script);
    CHECK(s.lookup(req) == std::optional<std::string>("exact"));
    CHECK(s.lookup(make_request("other", "Cordelia; Lear")) == std::optional<std::string>("pattern"));
    CHECK_FALSE(s.lookup(make_request("m", "Cordelia alone")).has_value());
    CHECK(s.lookup(make_request("llama", "Kent speaks")) == std::optional<std::string>("kent-llama"));
    CHECK(s.lookup(make_request("gpt", "Kent speaks")) == std::optional<std::string>("kent-any"));

    ReplayBackend miss(s);
    CHECK(code_of([&] { miss.complete(make_request("m", "nobody")); }) == ErrorCode::ScriptMiss);

    s.set_default_fixed("fallback");
    CHECK(s.lookup(make_request("m", "nobody")) == std::optional<std::string>("fallback"));
    CHECK(code_of([&] { s.add(req.digest(), "different"); }) == ErrorCode::ScriptMiss);
  }

  TEST_CASE("gateway caches responses and survives a corrupt entry") {
    TempDir dir("cache");
    ReplayScript script;
    auto req = make_request("m", "question");
    script.add(req.digest(), "answer");
    auto cfg = fast_config();
    {
      Gateway g(std::make_unique<ReplayBackend>(script), cfg, dir.path());
      auto first = g.complete(req);
      CHECK_FALSE(first.cached);
      CHECK(first.text == "answer");
      auto second = g.complete(req);
      CHECK(second.cached);
      CHECK(second.text == "answer");
    }
    ResponseCache cache(dir.path());
    auto path = cache.path_for(ResponseCache::key_for(req, "replay"));
    REQUIRE(std::filesystem::exists(path));
    auto bytes = evolvtrip::testing::slurp(path);
    evolvtrip::testing::spit(path, bytes.substr(0, bytes.size() / 2));

    Gateway g(std::make_unique<ReplayBackend>(script), cfg, dir.path());
    auto again = g.complete(req);
    CHECK_FALSE(again.cached);
    CHECK(again.text == "answer");
    REQUIRE(g.warnings().size() == 1);
    CHECK(g.warnings()[0].find("CacheCorrupt") != std::string::npos);
    CHECK(g.complete(req).cached);
  }

  TEST_CASE("transient failures are retried with exponential backoff") {
    auto clock = std::make_shared<VirtualClock>();
    auto backend = std::make_unique<ScriptedBackend>();
    backend->fail_first = 2;
    auto* raw = backend.get();
    Gateway g(std::move(backend), fast_config(), std::nullopt, clock);
    auto start = clock->now();
    CHECK(g.complete(make_request("m", "x")).text == "echo:x");
    CHECK(raw->calls == 3);
    CHECK(clock->now() - start == std::chrono::milliseconds(500 + 1000));
    CHECK(g.warnings().size() == 2);
  }

  TEST_CASE("retry exhaustion codes") {
    auto clock = std::make_shared<VirtualClock>();
    auto limited = std::make_unique<ScriptedBackend>();
    limited->fail_first = 100;
    limited->rate_limited = true;
    Gateway g1(std::move(limited), fast_config(), std::nullopt, clock);
    CHECK(code_of([&] { g1.complete(make_request("m", "x")); }) == ErrorCode::RateLimitedExhausted);

    auto down = std::make_unique<ScriptedBackend>();
    down->fail_first = 100;
    Gateway g2(std::move(down), fast_config(), std::nullopt, clock);
    CHECK(code_of([&] { g2.complete(make_request("m", "x")); }) == ErrorCode::TransportError);

    auto fatal = std::make_unique<ScriptedBackend>();
    fatal->fail_first = 100;
    fatal->transient = false;
    auto* raw = fatal.get();
    Gateway g3(std::move(fatal), fast_config(), std::nullopt, clock);
    CHECK(code_of([&] { g3.complete(make_request("m", "x")); }) == ErrorCode::TransportError);
    CHECK(raw->calls == 1);
  }

  TEST_CASE("rate limiter uses a sliding minute") {
    auto clock = std::make_shared<VirtualClock>();
    auto cfg = fast_config();
    cfg.requests_per_minute = 2;
    Gateway g(std::make_unique<ScriptedBackend>(), cfg, std::nullopt, clock);
    auto start = clock->now();
    for (int i = 0; i < 5; ++i) g.complete(make_request("m", std::to_string(i)));
    // issue times 0, 0, 60s, 60s, 120s
    CHECK(clock->now() - start == std::chrono::minutes(2));
  }

  TEST_CASE("batch keeps input order and bounds concurrency") {
    auto backend = std::make_unique<ScriptedBackend>();
    backend->hold = std::chrono::milliseconds(2);
    auto* raw = backend.get();
    auto cfg = fast_config();
    cfg.max_in_flight = 3;
    Gateway g(std::move(backend), cfg);
    std::vector<ChatRequest> reqs;
    for (int i = 0; i < 40; ++i) reqs.push_back(make_request("m", "q" + std::to_string(i)));
    auto out = g.run_batch(reqs);
    REQUIRE(out.size() == reqs.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      REQUIRE(out[i].ok());
      CHECK(out[i].response->text == "echo:q" + std::to_string(i));
    }
    CHECK(raw->peak <= 3);
    CHECK(raw->peak >= 1);
  }

  TEST_CASE("batch reports failures per request") {
    ReplayScript script;
    auto good = make_request("m", "known");
    script.add(good.digest(), "ok");
    Gateway g(std::make_unique<ReplayBackend>(script), fast_config());
    auto out = g.run_batch({good, make_request("m", "unknown"), good});
    CHECK(out[0].ok());
    CHECK_FALSE(out[1].ok());
    CHECK(out[1].error == ErrorCode::ScriptMiss);
    CHECK(out[2].ok());
  }

  TEST_CASE("http backend against a local server") {
    httplib::Server server;
    std::string seen_auth;
    json seen_body;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
      seen_auth = req.get_header_value("Authorization");
      seen_body = json::parse(req.body);
      json reply{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", "B"}}}}})},
                 {"usage", {{"prompt_tokens", 12}, {"completion_tokens", 1}}}};
      res.set_content(reply.dump(), "application/json");
    });
    server.Post("/busy", [](const httplib::Request&, httplib::Response& res) { res.status = 429; });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    BackendConfig cfg;
    cfg.kind = BackendKind::Http;
    cfg.id = "local";
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    cfg.auth_env_var = "EVOLVTRIP_TEST_KEY";
    cfg.max_tokens_field = "max_completion_tokens";
    cfg.timeout = std::chrono::milliseconds(5000);

    ::unsetenv("EVOLVTRIP_TEST_KEY");
    HttpBackend backend(cfg);
    CHECK(code_of([&] { backend.complete(make_request("m", "hi")); }) == ErrorCode::AuthMissing);

    ::setenv("EVOLVTRIP_TEST_KEY", "sk-test-secret", 1);
    auto r = backend.complete(make_request("gpt-4o-mini", "hi", 0.0, 16, 5));
    CHECK(r.text == "B");
    CHECK(r.prompt_tokens == 12);
    CHECK(r.output_tokens == 1);
    CHECK(seen_auth == "Bearer sk-test-secret");
    CHECK(seen_body["model"] == "gpt-4o-mini");
    CHECK(seen_body["max_completion_tokens"] == 16);
    CHECK(seen_body["seed"] == 5);
    CHECK(seen_body["messages"][0]["role"] == "user");
    CHECK(cfg.to_json().dump().find("sk-test-secret") == std::string::npos);

    auto busy_cfg = cfg;
    busy_cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/busy";
    busy_cfg.retry.max_attempts = 2;
    busy_cfg.retry.base_backoff = std::chrono::milliseconds(1);
    busy_cfg.requests_per_minute = 1000;
    Gateway g(std::make_unique<HttpBackend>(busy_cfg), busy_cfg, std::nullopt, std::make_shared<VirtualClock>());
    CHECK(code_of([&] { g.complete(make_request("m", "hi")); }) == ErrorCode::RateLimitedExhausted);
    ::unsetenv("EVOLVTRIP_TEST_KEY");

    server.stop();
    th.join();
  }

  TEST_CASE("backend config validation") {
    BackendConfig c;
    c.max_in_flight = 0;
    CHECK(code_of([&] { c.validate(); }) == ErrorCode::ConfigInvalid);
    auto cfg = fast_config();
    cfg.replay_script = "replay.jsonl";
    BackendConfig round = BackendConfig::from_json(cfg.to_json());
    CHECK(round.max_in_flight == 4);
    CHECK(round.retry.base_backoff == std::chrono::milliseconds(500));
  }
}
