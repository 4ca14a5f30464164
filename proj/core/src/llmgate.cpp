#include "evolvtrip/llmgate.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include "evolvtrip/hashing.hpp"
#include "evolvtrip/text.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace evolvtrip {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

Role role_from_string(std::string_view s) {
  if (s == "system") return Role::System;
  if (s == "user") return Role::User;
  if (s == "assistant") return Role::Assistant;
  throw Error(ErrorCode::InvalidRequest, "unknown role '" + std::string(s) + "'");
}

void ChatRequest::validate() const {
  if (model_id.empty()) throw Error(ErrorCode::InvalidRequest, "model_id is empty");
  if (std::none_of(messages.begin(), messages.end(), [](const ChatMessage& m) { return m.role == Role::User; })) {
    throw Error(ErrorCode::InvalidRequest, "request has no user message");
  }
  if (!(temperature >= 0.0 && temperature <= 2.0)) {
    throw Error(ErrorCode::InvalidRequest, "temperature must lie in [0, 2]");
  }
  if (max_output_tokens <= 0) throw Error(ErrorCode::InvalidRequest, "max_output_tokens must be positive");
}

json ChatRequest::to_json() const {
  json msgs = json::array();
  for (const auto& m : messages) msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return json{{"model_id", model_id},
              {"messages", std::move(msgs)},
              {"temperature", temperature},
              {"max_output_tokens", max_output_tokens},
              {"seed", seed ? json(*seed) : json(nullptr)}};
}

std::string ChatRequest::digest() const { return sha256_hex(to_json().dump()); }

std::string ChatRequest::prompt_text() const {
  std::string out;
  for (const auto& m : messages) {
    if (!out.empty()) out += "\n\n";
    out += m.content;
  }
  return out;
}

ChatRequest make_request(std::string model_id, std::string prompt, double temperature, int max_output_tokens,
                         std::optional<std::int64_t> seed) {
  ChatRequest r;
  r.model_id = std::move(model_id);
  r.messages.push_back({Role::User, std::move(prompt)});
  r.temperature = temperature;
  r.max_output_tokens = max_output_tokens;
  r.seed = seed;
  return r;
}

json ChatResponse::to_json() const {
  return json{{"text", text}, {"prompt_tokens", prompt_tokens}, {"output_tokens", output_tokens},
              {"backend_id", backend_id}};
}

ChatResponse ChatResponse::from_json(const json& j) {
  ChatResponse r;
  r.text = j.at("text").get<std::string>();
  r.prompt_tokens = j.at("prompt_tokens").get<std::int64_t>();
  r.output_tokens = j.at("output_tokens").get<std::int64_t>();
  r.backend_id = j.at("backend_id").get<std::string>();
  return r;
}

std::int64_t estimate_tokens(std::string_view s) {
  std::int64_t code_points = 0;
  for (unsigned char c : s) {
    if ((c & 0xC0) != 0x80) ++code_points;
  }
  return (code_points + 3) / 4;
}

// ---------------------------------------------------------------------------
// Clocks
// ---------------------------------------------------------------------------

Clock::time_point SystemClock::now() const {
  return std::chrono::time_point_cast<Clock::duration>(std::chrono::steady_clock::now());
}

void SystemClock::sleep_until(time_point t) { std::this_thread::sleep_until(t); }

Clock::time_point VirtualClock::now() const {
  std::lock_guard lock(mu_);
  return now_;
}

void VirtualClock::sleep_until(time_point t) {
  std::lock_guard lock(mu_);
  now_ = std::max(now_, t);
}

void VirtualClock::advance(duration d) {
  std::lock_guard lock(mu_);
  now_ += d;
}

// ---------------------------------------------------------------------------
// BackendConfig
// ---------------------------------------------------------------------------

void BackendConfig::validate() const {
  if (max_in_flight <= 0) throw Error(ErrorCode::ConfigInvalid, "backend.max_in_flight must be positive");
  if (requests_per_minute <= 0) throw Error(ErrorCode::ConfigInvalid, "backend.requests_per_minute must be positive");
  if (retry.max_attempts <= 0) throw Error(ErrorCode::ConfigInvalid, "backend.retry.max_attempts must be positive");
  if (retry.base_backoff.count() < 0) throw Error(ErrorCode::ConfigInvalid, "backend.retry.base_backoff_ms must be >= 0");
  if (kind == BackendKind::Http && endpoint.empty()) {
    throw Error(ErrorCode::ConfigInvalid, "backend.endpoint is required for http backends");
  }
  if (kind == BackendKind::Replay && replay_script.empty()) {
    throw Error(ErrorCode::ConfigInvalid, "backend.replay_script is required for replay backends");
  }
}

json BackendConfig::to_json() const {
  return json{{"kind", kind == BackendKind::Http ? "http" : "replay"},
              {"id", id},
              {"endpoint", endpoint},
              {"auth_env_var", auth_env_var},
              {"max_tokens_field", max_tokens_field},
              {"send_seed", send_seed},
              {"timeout_ms", timeout.count()},
              {"replay_script", replay_script.generic_string()},
              {"max_in_flight", max_in_flight},
              {"requests_per_minute", requests_per_minute},
              {"retry", {{"max_attempts", retry.max_attempts}, {"base_backoff_ms", retry.base_backoff.count()}}}};
}

BackendConfig BackendConfig::from_json(const json& j) {
  static const std::vector<std::string> kKeys = {"kind",          "id",           "endpoint",     "auth_env_var",
                                                 "max_tokens_field", "send_seed", "timeout_ms",   "replay_script",
                                                 "max_in_flight", "requests_per_minute", "retry"};
  if (!j.is_object()) throw Error(ErrorCode::ConfigInvalid, "backend must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
      throw Error(ErrorCode::ConfigInvalid, "unknown backend key '" + key + "'");
    }
  }
  BackendConfig c;
  try {
    std::string kind = j.value("kind", std::string("replay"));
    if (kind == "http") {
      c.kind = BackendKind::Http;
      c.id = "http";
    } else if (kind == "replay") {
      c.kind = BackendKind::Replay;
    } else {
      throw Error(ErrorCode::ConfigInvalid, "backend.kind must be 'http' or 'replay'");
    }
    c.id = j.value("id", c.id);
    c.endpoint = j.value("endpoint", std::string());
    c.auth_env_var = j.value("auth_env_var", std::string());
    c.max_tokens_field = j.value("max_tokens_field", c.max_tokens_field);
    c.send_seed = j.value("send_seed", c.send_seed);
    c.timeout = std::chrono::milliseconds(j.value("timeout_ms", static_cast<std::int64_t>(c.timeout.count())));
    c.replay_script = j.value("replay_script", std::string());
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    c.requests_per_minute = j.value("requests_per_minute", c.requests_per_minute);
    if (auto r = j.find("retry"); r != j.end()) {
      for (const auto& [key, _] : r->items()) {
        if (key != "max_attempts" && key != "base_backoff_ms") {
          throw Error(ErrorCode::ConfigInvalid, "unknown backend.retry key '" + key + "'");
        }
      }
      c.retry.max_attempts = r->value("max_attempts", c.retry.max_attempts);
      c.retry.base_backoff =
          std::chrono::milliseconds(r->value("base_backoff_ms", static_cast<std::int64_t>(c.retry.base_backoff.count())));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("backend: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

void ReplayScript::add(const std::string& digest, std::string response) {
  auto [it, inserted] = by_digest_.emplace(digest, response);
  if (!inserted && it->second != response) {
    throw Error(ErrorCode::ScriptMiss, "replay digest " + digest + " is mapped to two different responses");
  }
}

void ReplayScript::add_pattern(PatternEntry entry) { patterns_.push_back(std::move(entry)); }

void ReplayScript::set_default_fixed(std::string text) {
  policy_ = DefaultPolicy::Fixed;
  fixed_ = std::move(text);
}

void ReplayScript::set_default_error() {
  policy_ = DefaultPolicy::Error;
  fixed_.clear();
}

std::optional<std::string> ReplayScript::lookup(const ChatRequest& request) const {
  if (auto it = by_digest_.find(request.digest()); it != by_digest_.end()) return it->second;
  if (!patterns_.empty()) {
    const std::string prompt = request.prompt_text();
    for (const auto& p : patterns_) {
      if (p.model && *p.model != request.model_id) continue;
      bool ok = std::all_of(p.substrings.begin(), p.substrings.end(),
                            [&](const std::string& s) { return prompt.find(s) != std::string::npos; });
      if (ok && p.regex) ok = std::regex_search(prompt, std::regex(*p.regex));
      if (ok) return p.response;
    }
  }
  if (policy_ == DefaultPolicy::Fixed) return fixed_;
  return std::nullopt;
}

ReplayScript ReplayScript::parse(std::string_view jsonl) {
  ReplayScript script;
  std::size_t line_no = 0;
  for (const auto& raw : text::split(jsonl, '\n')) {
    ++line_no;
    std::string line = text::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const std::string where = "replay script line " + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ConfigInvalid, where + ": " + e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::ConfigInvalid, where + ": expected an object");
    if (j.contains("default_response")) {
      script.set_default_fixed(j["default_response"].get<std::string>());
      continue;
    }
    if (!j.contains("response_text") || !j["response_text"].is_string()) {
      throw Error(ErrorCode::ConfigInvalid, where + ": missing response_text");
    }
    std::string response = j["response_text"].get<std::string>();
    if (j.contains("digest")) {
      script.add(j["digest"].get<std::string>(), std::move(response));
    } else if (j.contains("prompt_pattern")) {
      PatternEntry entry;
      const auto& pat = j["prompt_pattern"];
      if (pat.is_string()) {
        entry.regex = pat.get<std::string>();
        try {
          std::regex check(*entry.regex);
        } catch (const std::regex_error& e) {
          throw Error(ErrorCode::ConfigInvalid, where + ": bad regex: " + e.what());
        }
      } else if (pat.is_array()) {
        for (const auto& s : pat) entry.substrings.push_back(s.get<std::string>());
      } else {
        throw Error(ErrorCode::ConfigInvalid, where + ": prompt_pattern must be a string or array");
      }
      if (j.contains("model")) entry.model = j["model"].get<std::string>();
      entry.response = std::move(response);
      script.add_pattern(std::move(entry));
    } else {
      throw Error(ErrorCode::ConfigInvalid, where + ": needs 'digest' or 'prompt_pattern'");
    }
  }
  return script;
}

ReplayScript ReplayScript::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ConfigInvalid, "cannot read replay script " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

ReplayBackend::ReplayBackend(ReplayScript script, std::string id) : script_(std::move(script)), id_(std::move(id)) {}

ChatResponse ReplayBackend::complete(const ChatRequest& request) {
  auto text = script_.lookup(request);
  if (!text) {
    throw BackendFailure(ErrorCode::ScriptMiss, "no scripted response for digest " + request.digest(), false);
  }
  ChatResponse r;
  r.text = *text;
  r.prompt_tokens = estimate_tokens(request.prompt_text());
  r.output_tokens = estimate_tokens(r.text);
  r.backend_id = id_;
  return r;
}

std::unique_ptr<ChatBackend> make_backend(const BackendConfig& config) {
  config.validate();
  if (config.kind == BackendKind::Replay) {
    return std::make_unique<ReplayBackend>(ReplayScript::load(config.replay_script), config.id);
  }
  return std::make_unique<HttpBackend>(config);
}

// ---------------------------------------------------------------------------
// Cache
// ---------------------------------------------------------------------------

ResponseCache::ResponseCache(fs::path root) : root_(std::move(root)) {}

std::string ResponseCache::key_for(const ChatRequest& request, const std::string& backend_id) {
  return sha256_hex(request.digest() + "|" + backend_id);
}

fs::path ResponseCache::path_for(const std::string& key) const { return root_ / key.substr(0, 2) / (key + ".json"); }

std::mutex& ResponseCache::lock_for(const std::string& key) const {
  return stripes_[std::hash<std::string>{}(key) % stripes_.size()];
}

std::optional<ChatResponse> ResponseCache::get(const std::string& key, std::string* warning) const {
  const fs::path path = path_for(key);
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    json j = json::parse(buf.str());
    const json& resp = j.at("response");
    if (j.at("key").get<std::string>() != key || j.at("checksum").get<std::string>() != sha256_hex(resp.dump())) {
      throw std::runtime_error("checksum mismatch");
    }
    ChatResponse r = ChatResponse::from_json(resp);
    r.cached = true;
    return r;
  } catch (const std::exception& e) {
    if (warning) *warning = "CacheCorrupt: " + path.string() + " (" + e.what() + "); treating as miss";
    return std::nullopt;
  }
}

void ResponseCache::put(const std::string& key, const ChatRequest& request, const ChatResponse& response) const {
  const fs::path path = path_for(key);
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create cache dir " + path.parent_path().string());
  json resp = response.to_json();
  json entry{{"key", key},
             {"request", {{"digest", request.digest()}, {"model_id", request.model_id},
                          {"messages", request.messages.size()},
                          {"prompt_tokens_estimate", estimate_tokens(request.prompt_text())}}},
             {"response", resp},
             {"checksum", sha256_hex(resp.dump())}};
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write cache entry " + tmp.string());
    out << entry.dump(2) << "\n";
  }
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot publish cache entry " + path.string());
}

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

RateLimiter::RateLimiter(int requests_per_minute, Clock& clock) : limit_(requests_per_minute), clock_(clock) {}

void RateLimiter::acquire() {
  std::unique_lock lock(mu_);
  while (true) {
    const auto now = clock_.now();
    while (!issued_.empty() && issued_.front() + std::chrono::minutes(1) <= now) issued_.pop_front();
    if (static_cast<int>(issued_.size()) < limit_) {
      issued_.push_back(now);
      return;
    }
    const auto wake = issued_.front() + std::chrono::minutes(1);
    lock.unlock();
    clock_.sleep_until(wake);
    lock.lock();
  }
}

Gateway::Gateway(std::unique_ptr<ChatBackend> backend, BackendConfig config, std::optional<fs::path> cache_dir,
                 std::shared_ptr<Clock> clock)
    : backend_(std::move(backend)),
      config_(std::move(config)),
      clock_(std::move(clock)),
      limiter_(config_.requests_per_minute, *clock_) {
  if (cache_dir) cache_.emplace(*cache_dir);
}

void Gateway::warn(std::string message) {
  std::lock_guard lock(warn_mu_);
  warnings_.push_back(std::move(message));
}

std::vector<std::string> Gateway::warnings() const {
  std::lock_guard lock(warn_mu_);
  return warnings_;
}

ChatResponse Gateway::call_backend(const ChatRequest& request) {
  {
    std::unique_lock lock(slots_mu_);
    slots_cv_.wait(lock, [&] { return in_flight_ < config_.max_in_flight; });
    ++in_flight_;
  }
  struct Release {
    Gateway* g;
    ~Release() {
      {
        std::lock_guard lock(g->slots_mu_);
        --g->in_flight_;
      }
      g->slots_cv_.notify_one();
    }
  } release{this};

  const int attempts = std::max(1, config_.retry.max_attempts);
  for (int attempt = 1;; ++attempt) {
    limiter_.acquire();
    try {
      return backend_->complete(request);
    } catch (const BackendFailure& f) {
      if (!f.transient()) throw;
      if (attempt >= attempts) {
        if (f.rate_limited()) {
          throw Error(ErrorCode::RateLimitedExhausted,
                      "gave up after " + std::to_string(attempt) + " attempts: " + f.detail());
        }
        throw Error(ErrorCode::TransportError, "gave up after " + std::to_string(attempt) + " attempts: " + f.detail());
      }
      warn("attempt " + std::to_string(attempt) + " failed (" + f.detail() + "); retrying");
      clock_->sleep_for(config_.retry.base_backoff * (1LL << std::min(attempt - 1, 20)));
    }
  }
}

ChatResponse Gateway::complete(const ChatRequest& request) {
  request.validate();
  if (!cache_) return call_backend(request);

  const std::string key = ResponseCache::key_for(request, backend_->id());
  std::lock_guard lock(cache_->lock_for(key));
  std::string warning;
  if (auto hit = cache_->get(key, &warning)) return *hit;
  if (!warning.empty()) warn(warning);
  ChatResponse fresh = call_backend(request);
  cache_->put(key, request, fresh);
  return fresh;
}

std::vector<BatchOutcome> Gateway::run_batch(const std::vector<ChatRequest>& requests) {
  std::vector<BatchOutcome> out(requests.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= requests.size()) return;
      try {
        out[i].response = complete(requests[i]);
      } catch (const Error& e) {
        out[i].error = e.code();
        out[i].error_message = e.detail();
      } catch (const std::exception& e) {
        out[i].error = ErrorCode::TransportError;
        out[i].error_message = e.what();
      }
    }
  };
  const std::size_t n_workers =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(1, config_.max_in_flight)), requests.size());
  if (n_workers <= 1) {
    worker();
    return out;
  }
  std::vector<std::thread> threads;
  threads.reserve(n_workers);
  for (std::size_t t = 0; t < n_workers; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  return out;
}

}  // namespace evolvtrip
