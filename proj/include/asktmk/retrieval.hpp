#pragma once

// Deterministic embedding and exact k-nearest-neighbour search over TMK
// documents. Scores are cosine similarity mapped affinely onto [0,1].

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "asktmk/tmk.hpp"

namespace asktmk::retrieval {

inline constexpr std::size_t kDefaultDimension = 256;

/// Unit-L2-norm vector. Construction normalizes and rejects zero vectors.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  /// Throws Error{EmptyText} for an all-zero (or empty) input.
  static EmbeddingVector normalized(std::vector<double> raw);
  /// Trusts the caller that `values` is already unit length (within 1e-9);
  /// throws Error{InvalidArgument} otherwise.
  static EmbeddingVector from_unit(std::vector<double> values);

  std::size_t dimension() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double norm() const noexcept;

  EmbeddingVector operator-() const;
  bool operator==(const EmbeddingVector&) const = default;

 private:
  explicit EmbeddingVector(std::vector<double> v) : values_(std::move(v)) {}
  std::vector<double> values_;
};

/// 64-bit FNV-1a; the hash behind the hashing embedder's buckets.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::string id() const = 0;
  virtual std::size_t dimension() const = 0;
  /// Throws Error{EmptyText} when `text` is blank.
  virtual EmbeddingVector embed(std::string_view text) const = 0;
};

/// Bag-of-tokens embedder: lowercase, split on non-alphanumerics, bucket
/// each token by fnv1a64(token) % dimension, count, L2-normalize.
class HashingEmbedder final : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dimension = kDefaultDimension);
  std::string id() const override;
  std::size_t dimension() const override { return dimension_; }
  EmbeddingVector embed(std::string_view text) const override;

 private:
  std::size_t dimension_;
};

struct RemoteEmbedderConfig {
  std::string endpoint;  // embeddings route, e.g. http://host/v1/embeddings
  std::string model_name;
  std::optional<std::string> auth;  // "env:VAR"
  std::size_t dimension = kDefaultDimension;
  int timeout_seconds = 60;
};

/// Embeddings-style HTTP adapter: POST {model, input} and read
/// data[0].embedding. Same contract as the hashing embedder; the returned
/// vector is re-normalized and its length checked against `dimension`.
std::unique_ptr<Embedder> make_remote_embedder(RemoteEmbedderConfig config);

/// Convenience for the default embedder.
EmbeddingVector embed(std::string_view text);

/// (1 + cos(u, v)) / 2, clamped to [0,1]. Throws Error{DimensionMismatch}.
double similarity(const EmbeddingVector& u, const EmbeddingVector& v);

struct RetrievalHit {
  std::string element_id;
  tmk::Kind kind = tmk::Kind::task;
  double score = 0.0;
  std::string title;

  tmk::DocumentKey key() const { return {kind, element_id}; }
  bool operator==(const RetrievalHit&) const = default;
};

struct IndexEntry {
  tmk::DocumentKey key;
  std::string title;
  EmbeddingVector vector;

  bool operator==(const IndexEntry&) const = default;
};

/// Immutable after build; safe for concurrent search.
class VectorIndex {
 public:
  VectorIndex(std::size_t dimension, std::string embedder_id, std::vector<IndexEntry> entries);

  std::size_t dimension() const noexcept { return dimension_; }
  const std::string& embedder_id() const noexcept { return embedder_id_; }
  const std::vector<IndexEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  bool operator==(const VectorIndex&) const = default;

 private:
  std::size_t dimension_;
  std::string embedder_id_;
  std::vector<IndexEntry> entries_;
};

/// Embeds title + "\n" + body for each document.
/// Throws Error{EmptyCorpus} or Error{DuplicateKey}.
VectorIndex build_index(std::span<const tmk::Document> documents, const Embedder& embedder);

/// Top min(k, size) entries by score, descending; equal scores ordered by
/// ascending document key. Throws Error{InvalidArgument} for k < 1 and
/// Error{DimensionMismatch}.
std::vector<RetrievalHit> search(const VectorIndex& index, const EmbeddingVector& query, std::size_t k);

/// Versioned plain-text dump: header, dimension, embedder id, then one line
/// per entry with kind, id, title and %.17g components.
std::string dump_index(const VectorIndex& index);
VectorIndex load_index_dump(std::string_view dump);

}  // namespace asktmk::retrieval
