#include "voila/io/http.hpp"

#include <cstdlib>

#include <httplib.h>

#include "voila/error.hpp"

namespace voila::io {

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ParameterError("malformed URL '" + url + "'");
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw ParameterError("unsupported URL scheme '" + scheme + "'");
  }
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (scheme == "https") throw ParameterError("built without TLS support; cannot reach " + url);
#endif
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

HttpResponse post_json(const std::string& url, const nlohmann::json& body,
                       const std::string& bearer_token, std::chrono::seconds timeout) {
  const ParsedUrl parts = split_url(url);
  httplib::Client client(parts.origin);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (!bearer_token.empty()) headers.emplace("Authorization", "Bearer " + bearer_token);
  auto res = client.Post(parts.path, headers, body.dump(), "application/json");
  if (!res) {
    throw BackendError("HTTP request to " + url + " failed: " + httplib::to_string(res.error()),
                       url);
  }
  return {res->status, res->body};
}

std::string env_or_empty(const std::string& name) {
  const char* v = std::getenv(name.c_str());
  return v == nullptr ? std::string() : std::string(v);
}

}  // namespace voila::io
