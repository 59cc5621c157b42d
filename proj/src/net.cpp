#include "asktmk/net.hpp"

#include <atomic>
#include <regex>

#include <httplib.h>

#include "asktmk/error.hpp"

namespace asktmk::net {

namespace {
std::atomic<std::uint64_t> g_outbound{0};
}

std::string Url::origin() const { return scheme + "://" + host + ":" + std::to_string(port); }

Url Url::parse(const std::string& url) {
  static const std::regex pattern(R"(^(https?)://([^/:?#]+)(?::(\d{1,5}))?(/[^#]*)?$)", std::regex::icase);
  std::smatch m;
  if (!std::regex_match(url, m, pattern)) throw Error(Errc::InvalidConfig, "not an http(s) URL: " + url);
  Url out;
  out.scheme = m[1].str();
  for (auto& c : out.scheme) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  out.host = m[2].str();
  out.port = m[3].matched ? std::stoi(m[3].str()) : (out.scheme == "https" ? 443 : 80);
  out.path = m[4].matched ? m[4].str() : "/";
  return out;
}

HttpResponse post_json(const std::string& url, const nlohmann::json& body,
                       const std::map<std::string, std::string>& headers, int timeout_seconds) {
  const Url target = Url::parse(url);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (target.scheme == "https") {
    throw Error(Errc::InvalidConfig, "https endpoints need a build with OpenSSL support");
  }
#endif
  httplib::Client client(target.origin());
  client.set_connection_timeout(timeout_seconds < 10 ? timeout_seconds : 10, 0);
  client.set_read_timeout(timeout_seconds, 0);
  client.set_write_timeout(timeout_seconds, 0);
  httplib::Headers hs;
  for (const auto& [k, v] : headers) hs.emplace(k, v);

  g_outbound.fetch_add(1, std::memory_order_relaxed);
  auto res = client.Post(target.path, hs, body.dump(), "application/json");
  if (!res) {
    throw Error(Errc::ProviderUnavailable,
                "no response from " + target.origin() + ": " + httplib::to_string(res.error()));
  }
  return {res->status, res->body};
}

std::uint64_t outbound_request_count() noexcept { return g_outbound.load(std::memory_order_relaxed); }

}  // namespace asktmk::net
