#include <cstdlib>
#include <httplib.h>

#include "evolvtrip/llmgate.hpp"

using nlohmann::json;

namespace evolvtrip {

namespace {

struct ParsedUrl {
  std::string scheme_host_port;  // what httplib::Client takes
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::ConfigInvalid, "endpoint must be an absolute URL: " + url);
  }
  auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl p;
  p.scheme_host_port = url.substr(0, path_start);
  p.path = path_start == std::string::npos ? "/" : url.substr(path_start);
  return p;
}

}  // namespace

HttpBackend::HttpBackend(BackendConfig config) : config_(std::move(config)) { parse_url(config_.endpoint); }

json HttpBackend::request_body(const ChatRequest& request) const {
  json msgs = json::array();
  for (const auto& m : request.messages) msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  json body{{"model", request.model_id}, {"messages", std::move(msgs)}, {"temperature", request.temperature}};
  body[config_.max_tokens_field] = request.max_output_tokens;
  if (config_.send_seed && request.seed) body["seed"] = *request.seed;
  return body;
}

ChatResponse HttpBackend::complete(const ChatRequest& request) {
  std::string key;
  if (!config_.auth_env_var.empty()) {
    const char* value = std::getenv(config_.auth_env_var.c_str());
    if (value == nullptr || *value == '\0') {
      throw BackendFailure(ErrorCode::AuthMissing, "environment variable " + config_.auth_env_var + " is not set",
                           false);
    }
    key = value;
  }

  const ParsedUrl url = parse_url(config_.endpoint);
  httplib::Client client(url.scheme_host_port);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout).count();
  client.set_connection_timeout(static_cast<time_t>(std::max<long long>(1, secs)));
  client.set_read_timeout(static_cast<time_t>(std::max<long long>(1, secs)));

  httplib::Headers headers;
  if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);

  auto res = client.Post(url.path, headers, request_body(request).dump(), "application/json");
  if (!res) {
    throw BackendFailure(ErrorCode::TransportError, "request failed: " + httplib::to_string(res.error()), true);
  }
  if (res->status == 429) {
    throw BackendFailure(ErrorCode::TransportError, "HTTP 429 rate limited", true, true);
  }
  if (res->status >= 500) {
    throw BackendFailure(ErrorCode::TransportError, "HTTP " + std::to_string(res->status), true);
  }
  if (res->status == 401 || res->status == 403) {
    throw BackendFailure(ErrorCode::AuthMissing, "HTTP " + std::to_string(res->status) + " from endpoint", false);
  }
  if (res->status != 200) {
    throw BackendFailure(ErrorCode::TransportError,
                         "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200), false);
  }

  ChatResponse out;
  out.backend_id = config_.id;
  try {
    json j = json::parse(res->body);
    const json& content = j.at("choices").at(0).at("message").at("content");
    out.text = content.is_string() ? content.get<std::string>() : std::string();
    if (auto usage = j.find("usage"); usage != j.end() && usage->is_object()) {
      out.prompt_tokens = usage->value("prompt_tokens", static_cast<std::int64_t>(-1));
      out.output_tokens = usage->value("completion_tokens", static_cast<std::int64_t>(-1));
    } else {
      out.prompt_tokens = out.output_tokens = -1;
    }
  } catch (const json::exception& e) {
    throw BackendFailure(ErrorCode::TransportError, std::string("malformed response body: ") + e.what(), false);
  }
  if (out.prompt_tokens < 0) out.prompt_tokens = estimate_tokens(request.prompt_text());
  if (out.output_tokens < 0) out.output_tokens = estimate_tokens(out.text);
  return out;
}

}  // namespace evolvtrip
