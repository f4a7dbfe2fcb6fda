#pragma once

#include <string>

#include "finrag/error.hpp"
#include "finrag/util.hpp"

namespace finrag {

struct RetryPolicy {
  int max_retries = 3;
  int backoff_base_ms = 500;  // doubled after every failed attempt
  int timeout_ms = 60000;
};

// Environment variable holding the bearer token for remote endpoints.
// Credentials never live in config files.
inline constexpr const char* kApiKeyEnv = "FINRAG_API_KEY";

// POSTs `body` as JSON to `url` and returns the parsed response body.
//
// Transport failures, 429 and 5xx responses are retried with exponential
// backoff; once retries are spent the call fails with `unavailable`. Other
// non-2xx statuses fail immediately with `unavailable`. A 2xx body that is
// not JSON is a BackendContractViolation. The first accepted response ends
// the attempt loop.
Json post_json(const std::string& url, const Json& body, const RetryPolicy& policy, ErrorCode unavailable);

}  // namespace finrag
