#pragma once

#include <array>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "evolvtrip/error.hpp"

namespace evolvtrip {

// ---------------------------------------------------------------------------
// Requests and responses
// ---------------------------------------------------------------------------

enum class Role { System, User, Assistant };

std::string_view to_string(Role role);
Role role_from_string(std::string_view s);

struct ChatMessage {
  Role role = Role::User;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::string model_id;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_output_tokens = 1024;
  std::optional<std::int64_t> seed = 0;

  // Throws Error(InvalidRequest) unless there is a user message, the
  // temperature lies in [0, 2] and max_output_tokens is positive.
  void validate() const;

  // Stable SHA-256 over every field (canonical JSON encoding).
  std::string digest() const;
  nlohmann::json to_json() const;
  // All message contents joined by blank lines; what replay patterns match.
  std::string prompt_text() const;

  bool operator==(const ChatRequest&) const = default;
};

// Convenience: a single-user-message request.
ChatRequest make_request(std::string model_id, std::string prompt, double temperature = 0.0,
                         int max_output_tokens = 1024, std::optional<std::int64_t> seed = 0);

struct ChatResponse {
  std::string text;
  std::int64_t prompt_tokens = 0;
  std::int64_t output_tokens = 0;
  std::string backend_id;
  bool cached = false;

  nlohmann::json to_json() const;
  static ChatResponse from_json(const nlohmann::json& j);
};

// Approximate token count: ceil(code points / 4). The exact tokenizer of any
// given provider is unknown here, so treat this as an estimate only.
std::int64_t estimate_tokens(std::string_view text);

// ---------------------------------------------------------------------------
// Clock
// ---------------------------------------------------------------------------

class Clock {
 public:
  using duration = std::chrono::milliseconds;
  using time_point = std::chrono::time_point<std::chrono::steady_clock, duration>;

  virtual ~Clock() = default;
  virtual time_point now() const = 0;
  virtual void sleep_until(time_point t) = 0;
  void sleep_for(duration d) { sleep_until(now() + d); }
};

class SystemClock final : public Clock {
 public:
  time_point now() const override;
  void sleep_until(time_point t) override;
};

// Deterministic clock for tests: sleeping advances time instantly.
class VirtualClock final : public Clock {
 public:
  time_point now() const override;
  void sleep_until(time_point t) override;
  void advance(duration d);

 private:
  mutable std::mutex mu_;
  time_point now_{};
};

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

// Failure reported by a backend. Transient failures are retried by the
// gateway; rate-limited ones additionally map to RateLimitedExhausted.
class BackendFailure : public Error {
 public:
  BackendFailure(ErrorCode code, const std::string& message, bool transient, bool rate_limited = false)
      : Error(code, message), transient_(transient), rate_limited_(rate_limited) {}
  bool transient() const noexcept { return transient_; }
  bool rate_limited() const noexcept { return rate_limited_; }

 private:
  bool transient_;
  bool rate_limited_;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
  virtual std::string id() const = 0;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_backoff{500};
};

enum class BackendKind { Http, Replay };

struct BackendConfig {
  BackendKind kind = BackendKind::Replay;
  std::string id = "replay";
  // Http
  std::string endpoint;        // e.g. https://api.openai.com/v1/chat/completions
  std::string auth_env_var;    // name of the variable holding the key; never the key
  std::string max_tokens_field = "max_tokens";
  bool send_seed = true;
  std::chrono::milliseconds timeout{120000};
  // Replay
  std::filesystem::path replay_script;
  // Shared
  int max_in_flight = 4;
  int requests_per_minute = 60;
  RetryPolicy retry;

  // Throws Error(ConfigInvalid) on out-of-range values.
  void validate() const;
  nlohmann::json to_json() const;
  static BackendConfig from_json(const nlohmann::json& j);
};

// Scripted responses keyed by request digest, with optional prompt-pattern
// fallbacks. Script file is JSONL:
//   {"digest": "<sha256>", "response_text": "..."}
//   {"prompt_pattern": "<regex>" | ["substr", ...], "model": "opt", "response_text": "..."}
//   {"default_response": "..."}   switches the default policy to Fixed
class ReplayScript {
 public:
  struct PatternEntry {
    std::optional<std::string> regex;
    std::vector<std::string> substrings;
    std::optional<std::string> model;
    std::string response;
  };
  enum class DefaultPolicy { Error, Fixed };

  ReplayScript() = default;

  static ReplayScript load(const std::filesystem::path& path);
  static ReplayScript parse(std::string_view jsonl);

  // Throws Error(ScriptMiss) if the digest is already mapped to different text.
  void add(const std::string& digest, std::string response);
  void add_pattern(PatternEntry entry);
  void set_default_fixed(std::string text);
  void set_default_error();

  // Pure lookup: digest first, then patterns in file order, then the default.
  std::optional<std::string> lookup(const ChatRequest& request) const;
  DefaultPolicy policy() const { return policy_; }
  std::size_t size() const { return by_digest_.size() + patterns_.size(); }

 private:
  std::map<std::string, std::string> by_digest_;
  std::vector<PatternEntry> patterns_;
  DefaultPolicy policy_ = DefaultPolicy::Error;
  std::string fixed_;
};

class ReplayBackend final : public ChatBackend {
 public:
  explicit ReplayBackend(ReplayScript script, std::string id = "replay");
  ChatResponse complete(const ChatRequest& request) override;
  std::string id() const override { return id_; }

 private:
  ReplayScript script_;
  std::string id_;
};

// Generic chat-completion HTTP contract: POST {model, messages[{role,
// content}], temperature, <max_tokens_field>, seed}; reads
// choices[0].message.content and usage.{prompt,completion}_tokens.
class HttpBackend final : public ChatBackend {
 public:
  explicit HttpBackend(BackendConfig config);
  ChatResponse complete(const ChatRequest& request) override;
  std::string id() const override { return config_.id; }

  nlohmann::json request_body(const ChatRequest& request) const;

 private:
  BackendConfig config_;
};

std::unique_ptr<ChatBackend> make_backend(const BackendConfig& config);

// ---------------------------------------------------------------------------
// Response cache
// ---------------------------------------------------------------------------

// Content-addressed store: <root>/<first two hex of key>/<key>.json where key
// is SHA-256 over the request digest and backend id. Entries carry a
// checksum; corrupt entries read as misses.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path root);

  static std::string key_for(const ChatRequest& request, const std::string& backend_id);
  std::filesystem::path path_for(const std::string& key) const;

  // nullopt on miss; a corrupt entry is reported through `warning`.
  std::optional<ChatResponse> get(const std::string& key, std::string* warning = nullptr) const;
  void put(const std::string& key, const ChatRequest& request, const ChatResponse& response) const;

  std::mutex& lock_for(const std::string& key) const;
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
  mutable std::array<std::mutex, 64> stripes_;
};

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

// Sliding one-minute window limiter.
class RateLimiter {
 public:
  RateLimiter(int requests_per_minute, Clock& clock);
  void acquire();

 private:
  int limit_;
  Clock& clock_;
  std::mutex mu_;
  std::deque<Clock::time_point> issued_;
};

struct BatchOutcome {
  std::optional<ChatResponse> response;
  std::optional<ErrorCode> error;
  std::string error_message;

  bool ok() const { return response.has_value(); }
};

// Entry point every pipeline stage uses to talk to a model. Thread-safe.
class Gateway {
 public:
  Gateway(std::unique_ptr<ChatBackend> backend, BackendConfig config,
          std::optional<std::filesystem::path> cache_dir = std::nullopt,
          std::shared_ptr<Clock> clock = std::make_shared<SystemClock>());

  // Cache lookup (when configured), then the backend with retries, bounded
  // in-flight count and rate limiting. Throws Error on final failure.
  ChatResponse complete(const ChatRequest& request);

  // Runs requests with at most max_in_flight workers; results keep the
  // input order.
  std::vector<BatchOutcome> run_batch(const std::vector<ChatRequest>& requests);

  std::vector<std::string> warnings() const;
  const BackendConfig& config() const { return config_; }
  std::string backend_id() const { return backend_->id(); }
  bool caching() const { return cache_.has_value(); }

 private:
  ChatResponse call_backend(const ChatRequest& request);
  void warn(std::string message);

  std::unique_ptr<ChatBackend> backend_;
  BackendConfig config_;
  std::optional<ResponseCache> cache_;
  std::shared_ptr<Clock> clock_;
  RateLimiter limiter_;

  std::mutex slots_mu_;
  std::condition_variable slots_cv_;
  int in_flight_ = 0;

  mutable std::mutex warn_mu_;
  std::vector<std::string> warnings_;
};

}  // namespace evolvtrip
