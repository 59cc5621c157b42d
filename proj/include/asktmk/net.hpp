#pragma once

// Minimal outbound HTTP used by the remote provider and remote embedder.
// Every attempt is counted so tests can assert that mock mode stays offline.

#include <cstdint>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

namespace asktmk::net {

struct Url {
  std::string scheme;  // http or https
  std::string host;
  int port = 0;
  std::string path;  // starts with '/'

  std::string origin() const;  // scheme://host:port
  /// Throws Error{InvalidConfig}.
  static Url parse(const std::string& url);
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// POSTs a JSON body. Throws Error{ProviderUnavailable} when no response is
/// received; any HTTP status is returned as-is.
HttpResponse post_json(const std::string& url, const nlohmann::json& body,
                       const std::map<std::string, std::string>& headers, int timeout_seconds);

/// Number of outbound requests attempted by this process.
std::uint64_t outbound_request_count() noexcept;

}  // namespace asktmk::net
