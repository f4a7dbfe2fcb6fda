#include "finrag/http.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>

namespace finrag {

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::ConfigError, "endpoint '" + url + "' must start with http:// or https://");
  }
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

Json post_json(const std::string& url, const Json& body, const RetryPolicy& policy, ErrorCode unavailable) {
  const auto target = parse_url(url);
  const std::string payload = body.dump();
  httplib::Headers headers;
  if (const char* key = std::getenv(kApiKeyEnv); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  std::string last_failure;
  int delay_ms = policy.backoff_base_ms;
  for (int attempt = 0; attempt <= policy.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
      delay_ms *= 2;
    }
    // One client per attempt: clients are not shared between threads.
    httplib::Client client(target.origin);
    auto timeout = std::chrono::milliseconds(policy.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    auto res = client.Post(target.path, headers, payload, "application/json");
    if (!res) {
      last_failure = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_failure = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw Error(unavailable, url + " answered HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    try {
      return Json::parse(res->body);
    } catch (const Json::parse_error&) {
      throw Error(ErrorCode::BackendContractViolation, url + " returned a non-JSON body");
    }
  }
  throw Error(unavailable, url + " unavailable after " + std::to_string(policy.max_retries + 1) +
                               " attempts (" + last_failure + ")");
}

}  // namespace finrag
