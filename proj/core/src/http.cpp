#include "zerostylus/http.hpp"

#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "zerostylus/error.hpp"

namespace zerostylus::http {

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::ConfigError, "endpoint '" + url + "' lacks a scheme");
  }
  const auto path_begin = url.find('/', scheme_end + 3);
  if (path_begin == std::string::npos) return {url, "/"};
  return {url.substr(0, path_begin), url.substr(path_begin)};
}

class HttplibTransport final : public Transport {
 public:
  explicit HttplibTransport(std::chrono::seconds timeout) : timeout_(timeout) {}

  Response post(const std::string& url, const std::string& body,
                const Headers& headers) override {
    const auto parsed = split_url(url);
    httplib::Client client(parsed.origin);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers hs;
    for (const auto& [k, v] : headers) hs.emplace(k, v);
    auto res = client.Post(parsed.path, hs, body, "application/json");
    if (!res) return {0, httplib::to_string(res.error())};
    return {res->status, res->body};
  }

 private:
  std::chrono::seconds timeout_;
};

bool retriable(int status) { return status == 0 || status == 429 || status >= 500; }

}  // namespace

std::shared_ptr<Transport> make_default_transport(std::chrono::seconds timeout) {
  return std::make_shared<HttplibTransport>(timeout);
}

nlohmann::json post_json(Transport& transport, const std::string& url,
                         const nlohmann::json& body, const Headers& headers,
                         const RetryPolicy& policy) {
  const std::string payload = body.dump();
  auto backoff = policy.initial_backoff;
  std::string last_error;
  const int attempts = std::max(1, policy.max_attempts);
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    const Response res = transport.post(url, payload, headers);
    if (res.status >= 200 && res.status < 300) {
      try {
        return nlohmann::json::parse(res.body);
      } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::BackendUnavailable,
                    url + " returned malformed JSON: " + e.what());
      }
    }
    last_error = "status " + std::to_string(res.status) + ": " + res.body.substr(0, 200);
    if (!retriable(res.status)) break;
    if (attempt < attempts) {
      spdlog::warn("POST {} failed ({}), retry {}/{}", url, last_error, attempt, attempts - 1);
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw Error(ErrorCode::BackendUnavailable, url + " unavailable: " + last_error);
}

Headers auth_headers(const std::string& api_key_env) {
  Headers hs;
  if (api_key_env.empty()) return hs;
  if (const char* key = std::getenv(api_key_env.c_str()); key && *key) {
    hs.emplace_back("Authorization", std::string("Bearer ") + key);
  }
  return hs;
}

}  // namespace zerostylus::http
