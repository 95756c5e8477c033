#pragma once

#include <chrono>
#include <string>

#include <json.hpp>

namespace voila::io {

struct HttpResponse {
  int status = 0;
  std::string body;
};

// POST `body` as application/json to an http:// or https:// URL. Adds a
// bearer Authorization header when `bearer_token` is non-empty. Throws
// BackendError (retriable) on transport failure.
HttpResponse post_json(const std::string& url, const nlohmann::json& body,
                       const std::string& bearer_token,
                       std::chrono::seconds timeout = std::chrono::seconds(60));

// Value of the environment variable, or empty when unset.
std::string env_or_empty(const std::string& name);

}  // namespace voila::io
