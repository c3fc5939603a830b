#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace zerostylus::http {

using Headers = std::vector<std::pair<std::string, std::string>>;

struct Response {
  int status = 0;  // 0 means the request never completed
  std::string body;
};

/// Minimal POST transport. Remote backends only speak through this seam, so
/// tests can substitute a scripted implementation.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual Response post(const std::string& url, const std::string& body,
                        const Headers& headers) = 0;
};

std::shared_ptr<Transport> make_default_transport(
    std::chrono::seconds timeout = std::chrono::seconds(120));

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
};

/// POSTs a JSON body, retrying transport failures, 429 and 5xx with
/// exponential backoff. Throws BackendUnavailable once attempts run out or on
/// a non-retriable status / unparsable reply.
nlohmann::json post_json(Transport& transport, const std::string& url,
                         const nlohmann::json& body, const Headers& headers,
                         const RetryPolicy& policy);

/// Bearer authorization from the named environment variable, if set.
Headers auth_headers(const std::string& api_key_env);

}  // namespace zerostylus::http
