#include <map>

#include "asktmk/error.hpp"
#include "asktmk/genai.hpp"
#include "asktmk/net.hpp"
#include "asktmk/retrieval.hpp"
#include "asktmk/text.hpp"

namespace asktmk::retrieval {

namespace {

class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(RemoteEmbedderConfig config) : config_(std::move(config)) {}

  std::string id() const override { return "remote:" + config_.model_name + "-d" + std::to_string(config_.dimension); }
  std::size_t dimension() const override { return config_.dimension; }

  EmbeddingVector embed(std::string_view input) const override {
    if (text::trim(input).empty()) throw Error(Errc::EmptyText, "cannot embed blank text");
    nlohmann::json body = {{"model", config_.model_name}, {"input", std::string(input)}};
    std::map<std::string, std::string> headers;
    if (auto key = genai::resolve_secret(config_.auth)) headers["Authorization"] = "Bearer " + *key;
    auto res = net::post_json(config_.endpoint, body, headers, config_.timeout_seconds);
    if (res.status < 200 || res.status >= 300) {
      throw Error(Errc::ProviderError, "embedding service returned HTTP " + std::to_string(res.status),
                  {{"status", res.status}, {"body", res.body}});
    }
    std::vector<double> values;
    try {
      values = nlohmann::json::parse(res.body).at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::ProviderError, std::string("unreadable embedding response: ") + e.what(),
                  {{"status", res.status}, {"body", res.body}});
    }
    if (values.size() != config_.dimension) {
      throw Error(Errc::DimensionMismatch, "embedding service returned " + std::to_string(values.size()) +
                                               " values, expected " + std::to_string(config_.dimension));
    }
    return EmbeddingVector::normalized(std::move(values));
  }

 private:
  RemoteEmbedderConfig config_;
};

}  // namespace

std::unique_ptr<Embedder> make_remote_embedder(RemoteEmbedderConfig config) {
  net::Url::parse(config.endpoint);
  if (config.dimension == 0) throw Error(Errc::InvalidConfig, "embedding dimension must be positive");
  return std::make_unique<RemoteEmbedder>(std::move(config));
}

}  // namespace asktmk::retrieval
