#include "asktmk/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "asktmk/error.hpp"
#include "asktmk/text.hpp"

namespace asktmk::retrieval {

namespace {
double dot(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}
}  // namespace

EmbeddingVector EmbeddingVector::normalized(std::vector<double> raw) {
  double n = std::sqrt(dot(raw, raw));
  if (raw.empty() || n == 0.0 || !std::isfinite(n)) {
    throw Error(Errc::EmptyText, "cannot normalize a zero or empty vector");
  }
  for (auto& x : raw) x /= n;
  return EmbeddingVector(std::move(raw));
}

EmbeddingVector EmbeddingVector::from_unit(std::vector<double> values) {
  double n = std::sqrt(dot(values, values));
  if (values.empty() || std::abs(n - 1.0) > 1e-9) {
    throw Error(Errc::InvalidArgument, "vector is not unit length (norm " + std::to_string(n) + ")");
  }
  return EmbeddingVector(std::move(values));
}

double EmbeddingVector::norm() const noexcept { return std::sqrt(dot(values_, values_)); }

EmbeddingVector EmbeddingVector::operator-() const {
  std::vector<double> v(values_);
  for (auto& x : v) x = -x;
  return EmbeddingVector(std::move(v));
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

HashingEmbedder::HashingEmbedder(std::size_t dimension) : dimension_(dimension) {
  if (dimension_ == 0) throw Error(Errc::InvalidArgument, "embedding dimension must be positive");
}

std::string HashingEmbedder::id() const { return "hashing-fnv1a64-d" + std::to_string(dimension_); }

EmbeddingVector HashingEmbedder::embed(std::string_view input) const {
  if (text::trim(input).empty()) throw Error(Errc::EmptyText, "cannot embed blank text");
  std::vector<double> counts(dimension_, 0.0);
  auto tokens = text::tokenize(input);
  if (tokens.empty()) throw Error(Errc::EmptyText, "text has no alphanumeric tokens");
  for (const auto& tok : tokens) counts[fnv1a64(tok) % dimension_] += 1.0;
  return EmbeddingVector::normalized(std::move(counts));
}

EmbeddingVector embed(std::string_view input) {
  static const HashingEmbedder embedder;
  return embedder.embed(input);
}

double similarity(const EmbeddingVector& u, const EmbeddingVector& v) {
  if (u.dimension() != v.dimension()) {
    throw Error(Errc::DimensionMismatch, "dimension " + std::to_string(u.dimension()) + " vs " +
                                             std::to_string(v.dimension()));
  }
  double score = (1.0 + dot(u.values(), v.values())) / 2.0;
  return std::clamp(score, 0.0, 1.0);
}

VectorIndex::VectorIndex(std::size_t dimension, std::string embedder_id, std::vector<IndexEntry> entries)
    : dimension_(dimension), embedder_id_(std::move(embedder_id)), entries_(std::move(entries)) {
  if (dimension_ == 0) throw Error(Errc::InvalidArgument, "index dimension must be positive");
  std::set<tmk::DocumentKey> keys;
  for (const auto& e : entries_) {
    if (e.vector.dimension() != dimension_) {
      throw Error(Errc::DimensionMismatch, "entry " + e.key.str() + " has dimension " +
                                               std::to_string(e.vector.dimension()));
    }
    if (!keys.insert(e.key).second) throw Error(Errc::DuplicateKey, "duplicate document key " + e.key.str());
  }
}

VectorIndex build_index(std::span<const tmk::Document> documents, const Embedder& embedder) {
  if (documents.empty()) throw Error(Errc::EmptyCorpus, "cannot index an empty corpus");
  std::set<tmk::DocumentKey> keys;
  std::vector<IndexEntry> entries;
  entries.reserve(documents.size());
  for (const auto& doc : documents) {
    if (!keys.insert(doc.key()).second) throw Error(Errc::DuplicateKey, "duplicate document key " + doc.key().str());
    entries.push_back({doc.key(), doc.title, embedder.embed(doc.title + "\n" + doc.body)});
  }
  return VectorIndex(embedder.dimension(), embedder.id(), std::move(entries));
}

std::vector<RetrievalHit> search(const VectorIndex& index, const EmbeddingVector& query, std::size_t k) {
  if (k < 1) throw Error(Errc::InvalidArgument, "k must be at least 1");
  if (query.dimension() != index.dimension()) {
    throw Error(Errc::DimensionMismatch, "query dimension " + std::to_string(query.dimension()) +
                                             " vs index dimension " + std::to_string(index.dimension()));
  }
  struct Scored {
    double score;
    const IndexEntry* entry;
  };
  std::vector<Scored> scored;
  scored.reserve(index.size());
  for (const auto& e : index.entries()) scored.push_back({similarity(query, e.vector), &e});

  const std::size_t n = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(),
                    [](const Scored& a, const Scored& b) {
                      if (a.score != b.score) return a.score > b.score;
                      return a.entry->key < b.entry->key;
                    });
  std::vector<RetrievalHit> hits;
  hits.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = *scored[i].entry;
    hits.push_back({e.key.element_id, e.key.kind, scored[i].score, e.title});
  }
  return hits;
}

namespace {
constexpr std::string_view kDumpHeader = "asktmk-index v1";
}

std::string dump_index(const VectorIndex& index) {
  std::ostringstream out;
  out << kDumpHeader << "\n"
      << "dimension " << index.dimension() << "\n"
      << "embedder " << index.embedder_id() << "\n"
      << "entries " << index.size() << "\n";
  char buf[40];
  for (const auto& e : index.entries()) {
    out << to_string(e.key.kind) << "\t" << e.key.element_id << "\t" << text::single_line(e.title) << "\t";
    const auto values = e.vector.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", values[i]);
      out << (i ? " " : "") << buf;
    }
    out << "\n";
  }
  return out.str();
}

VectorIndex load_index_dump(std::string_view dump) {
  std::istringstream in{std::string(dump)};
  auto bad = [](const std::string& why) { return Error(Errc::MalformedInput, "index dump: " + why); };
  std::string line;
  if (!std::getline(in, line) || line != kDumpHeader) throw bad("missing header");

  std::string word;
  std::size_t dimension = 0, count = 0;
  std::string embedder_id;
  if (!std::getline(in, line) || (std::istringstream(line) >> word >> dimension, word != "dimension")) {
    throw bad("missing dimension");
  }
  if (!std::getline(in, line) || line.rfind("embedder ", 0) != 0) throw bad("missing embedder");
  embedder_id = line.substr(9);
  if (!std::getline(in, line) || (std::istringstream(line) >> word >> count, word != "entries")) {
    throw bad("missing entry count");
  }

  std::vector<IndexEntry> entries;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (int i = 0; i < 3; ++i) {
      auto tab = line.find('\t', start);
      if (tab == std::string::npos) throw bad("entry line needs four tab-separated fields");
      fields.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    auto kind = tmk::parse_kind(fields[0]);
    if (!kind) throw bad("unknown kind " + fields[0]);
    std::istringstream nums(line.substr(start));
    std::vector<double> values;
    double x;
    while (nums >> x) values.push_back(x);
    if (values.size() != dimension) throw bad("entry " + fields[1] + " has wrong dimension");
    entries.push_back({{*kind, fields[1]}, fields[2], EmbeddingVector::from_unit(std::move(values))});
  }
  if (entries.size() != count) throw bad("entry count mismatch");
  return VectorIndex(dimension, embedder_id, std::move(entries));
}

}  // namespace asktmk::retrieval
