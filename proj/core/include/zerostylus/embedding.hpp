#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "zerostylus/http.hpp"

namespace zerostylus::embedding {

/// Dense vector tagged with the backend that produced it. Values are finite
/// and non-empty; vectors from different backends never mix.
class Embedding {
 public:
  Embedding(std::vector<double> values, std::string backend_id);

  std::span<const double> values() const noexcept { return values_; }
  std::size_t dim() const noexcept { return values_.size(); }
  const std::string& backend_id() const noexcept { return backend_id_; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  bool operator==(const Embedding&) const = default;

 private:
  std::vector<double> values_;
  std::string backend_id_;
};

/// Throws DimensionMismatch / BackendMismatch when the pair is incompatible.
void require_compatible(const Embedding& a, const Embedding& b);

double l2_norm(const Embedding& e) noexcept;
/// Cosine in [-1, 1]. Throws ZeroVector if either side is all zeros.
double cosine_similarity(const Embedding& a, const Embedding& b);
double euclidean_distance(const Embedding& a, const Embedding& b);
/// Component-wise mean, not re-normalized.
Embedding mean_pool(std::span<const Embedding> embs);

/// Composite paragraph encoder; mean_pool unless a backend supplies its own.
using Aggregator = std::function<Embedding(std::span<const Embedding>)>;
Aggregator default_aggregator();

enum class BackendKind { Mock, Remote };

struct EmbeddingBackendSpec {
  std::string backend_id = "mock-trigram";
  BackendKind kind = BackendKind::Mock;
  std::string endpoint;
  std::string model_name = "trigram-hash";
  std::size_t dim = 256;
  std::size_t max_batch = 64;
  std::string api_key_env;
  std::uint64_t hash_seed = 0;
  std::size_t max_in_flight = 1;
  std::size_t max_job_texts = 100000;
  http::RetryPolicy retry;

  void validate() const;
};

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual const EmbeddingBackendSpec& spec() const noexcept = 0;
  /// One embedding per text, same order.
  virtual std::vector<Embedding> embed(std::span<const std::string> texts) = 0;
};

/// Hashed character trigrams (with one boundary marker on each side), counted
/// into `dim` buckets and L2-normalized. Pure function of (text, dim, seed).
Embedding mock_embed(std::string_view text, std::size_t dim, std::uint64_t seed,
                     const std::string& backend_id);

/// Bucket index of one trigram under the mock scheme.
std::size_t mock_bucket(std::string_view trigram, std::size_t dim, std::uint64_t seed) noexcept;

inline constexpr char kBoundaryMarker = '\x02';

class MockEmbeddingBackend final : public EmbeddingBackend {
 public:
  explicit MockEmbeddingBackend(EmbeddingBackendSpec spec);
  const EmbeddingBackendSpec& spec() const noexcept override { return spec_; }
  std::vector<Embedding> embed(std::span<const std::string> texts) override;
  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  EmbeddingBackendSpec spec_;
  std::atomic<std::size_t> calls_{0};
};

/// POST {"model", "input": [...]} -> {"data": [{"embedding": [...]}, ...]},
/// chunked at max_batch with up to max_in_flight concurrent requests.
class RemoteEmbeddingBackend final : public EmbeddingBackend {
 public:
  RemoteEmbeddingBackend(EmbeddingBackendSpec spec, std::shared_ptr<http::Transport> transport);
  const EmbeddingBackendSpec& spec() const noexcept override { return spec_; }
  std::vector<Embedding> embed(std::span<const std::string> texts) override;

 private:
  std::vector<Embedding> embed_chunk(std::span<const std::string> texts);

  EmbeddingBackendSpec spec_;
  std::shared_ptr<http::Transport> transport_;
};

std::unique_ptr<EmbeddingBackend> make_embedding_backend(
    const EmbeddingBackendSpec& spec, std::shared_ptr<http::Transport> transport = nullptr);

/// Validates inputs (EmptyText, job limit) and delegates to the backend.
std::vector<Embedding> embed_sentences(EmbeddingBackend& backend,
                                       std::span<const std::string> texts);

}  // namespace zerostylus::embedding
