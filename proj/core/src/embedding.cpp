#include "zerostylus/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <future>

#include "zerostylus/error.hpp"
#include "zerostylus/util.hpp"

namespace zerostylus::embedding {

Embedding::Embedding(std::vector<double> values, std::string backend_id)
    : values_(std::move(values)), backend_id_(std::move(backend_id)) {
  if (values_.empty()) throw Error(ErrorCode::InvalidArgument, "embedding has no components");
  for (double v : values_) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "embedding has non-finite value");
  }
}

void require_compatible(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  }
  if (a.backend_id() != b.backend_id()) {
    throw Error(ErrorCode::BackendMismatch, "'" + a.backend_id() + "' vs '" + b.backend_id() + "'");
  }
}

double l2_norm(const Embedding& e) noexcept {
  double sum = 0.0;
  for (double v : e.values()) sum += v * v;
  return std::sqrt(sum);
}

double cosine_similarity(const Embedding& a, const Embedding& b) {
  require_compatible(a, b);
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::ZeroVector, "cosine of a zero vector");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) dot += a[i] * b[i];
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

double euclidean_distance(const Embedding& a, const Embedding& b) {
  require_compatible(a, b);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

Embedding mean_pool(std::span<const Embedding> embs) {
  if (embs.empty()) throw Error(ErrorCode::EmptyList, "mean_pool of no embeddings");
  std::vector<double> acc(embs.front().dim(), 0.0);
  for (const auto& e : embs) {
    require_compatible(embs.front(), e);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += e[i];
  }
  const auto n = static_cast<double>(embs.size());
  for (auto& v : acc) v /= n;
  return Embedding(std::move(acc), embs.front().backend_id());
}

Aggregator default_aggregator() {
  return [](std::span<const Embedding> embs) { return mean_pool(embs); };
}

void EmbeddingBackendSpec::validate() const {
  if (backend_id.empty()) throw Error(ErrorCode::ConfigError, "embedding backend_id is empty");
  if (dim < 1) throw Error(ErrorCode::ConfigError, "embedding dim must be >= 1");
  if (max_batch < 1) throw Error(ErrorCode::ConfigError, "embedding max_batch must be >= 1");
  if (max_in_flight < 1) throw Error(ErrorCode::ConfigError, "embedding max_in_flight must be >= 1");
  if (kind == BackendKind::Remote && endpoint.empty()) {
    throw Error(ErrorCode::ConfigError, "remote embedding backend needs an endpoint");
  }
}

std::size_t mock_bucket(std::string_view trigram, std::size_t dim, std::uint64_t seed) noexcept {
  char seed_bytes[8];
  for (int i = 0; i < 8; ++i) seed_bytes[i] = static_cast<char>((seed >> (8 * i)) & 0xFF);
  const auto state = fnv1a(std::string_view(seed_bytes, 8));
  return static_cast<std::size_t>(fnv1a(trigram, state) % dim);
}

Embedding mock_embed(std::string_view text, std::size_t dim, std::uint64_t seed,
                     const std::string& backend_id) {
  std::string padded;
  padded.reserve(text.size() + 2);
  padded += kBoundaryMarker;
  padded += text;
  padded += kBoundaryMarker;

  std::vector<double> counts(dim, 0.0);
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    counts[mock_bucket(std::string_view(padded).substr(i, 3), dim, seed)] += 1.0;
  }
  double norm = 0.0;
  for (double c : counts) norm += c * c;
  norm = std::sqrt(norm);
  for (auto& c : counts) c /= norm;
  return Embedding(std::move(counts), backend_id);
}

MockEmbeddingBackend::MockEmbeddingBackend(EmbeddingBackendSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
}

std::vector<Embedding> MockEmbeddingBackend::embed(std::span<const std::string> texts) {
  ++calls_;
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(mock_embed(t, spec_.dim, spec_.hash_seed, spec_.backend_id));
  return out;
}

RemoteEmbeddingBackend::RemoteEmbeddingBackend(EmbeddingBackendSpec spec,
                                               std::shared_ptr<http::Transport> transport)
    : spec_(std::move(spec)), transport_(std::move(transport)) {
  spec_.validate();
  if (!transport_) transport_ = http::make_default_transport();
}

std::vector<Embedding> RemoteEmbeddingBackend::embed_chunk(std::span<const std::string> texts) {
  nlohmann::json body = {{"model", spec_.model_name},
                         {"input", std::vector<std::string>(texts.begin(), texts.end())}};
  const auto reply = http::post_json(*transport_, spec_.endpoint, body,
                                     http::auth_headers(spec_.api_key_env), spec_.retry);
  const auto data = reply.find("data");
  if (data == reply.end() || !data->is_array() || data->size() != texts.size()) {
    throw Error(ErrorCode::BackendUnavailable,
                "embedding reply must carry one data entry per input");
  }
  std::vector<std::vector<double>> slots(texts.size());
  for (std::size_t i = 0; i < data->size(); ++i) {
    const auto& item = (*data)[i];
    // Honour an explicit "index" when the server reorders results.
    std::size_t at = i;
    if (auto idx = item.find("index"); idx != item.end() && idx->is_number_unsigned()) {
      at = idx->get<std::size_t>();
    }
    if (at >= slots.size() || !slots[at].empty()) {
      throw Error(ErrorCode::BackendUnavailable, "embedding reply has inconsistent indices");
    }
    try {
      slots[at] = item.at("embedding").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::BackendUnavailable, std::string("bad embedding entry: ") + e.what());
    }
    if (slots[at].size() != spec_.dim) {
      throw Error(ErrorCode::DimensionMismatch,
                  "remote returned dim " + std::to_string(slots[at].size()) + ", expected " +
                      std::to_string(spec_.dim));
    }
  }
  std::vector<Embedding> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.emplace_back(std::move(s), spec_.backend_id);
  return out;
}

std::vector<Embedding> RemoteEmbeddingBackend::embed(std::span<const std::string> texts) {
  std::vector<std::span<const std::string>> chunks;
  for (std::size_t i = 0; i < texts.size(); i += spec_.max_batch) {
    chunks.push_back(texts.subspan(i, std::min(spec_.max_batch, texts.size() - i)));
  }
  std::vector<Embedding> out;
  out.reserve(texts.size());
  // Waves of at most max_in_flight requests; results appended in chunk order.
  for (std::size_t w = 0; w < chunks.size(); w += spec_.max_in_flight) {
    const std::size_t end = std::min(chunks.size(), w + spec_.max_in_flight);
    if (end - w == 1) {
      auto part = embed_chunk(chunks[w]);
      std::move(part.begin(), part.end(), std::back_inserter(out));
      continue;
    }
    std::vector<std::future<std::vector<Embedding>>> wave;
    for (std::size_t c = w; c < end; ++c) {
      wave.push_back(std::async(std::launch::async, [this, chunk = chunks[c]] {
        return embed_chunk(chunk);
      }));
    }
    for (auto& f : wave) {
      auto part = f.get();
      std::move(part.begin(), part.end(), std::back_inserter(out));
    }
  }
  return out;
}

std::unique_ptr<EmbeddingBackend> make_embedding_backend(
    const EmbeddingBackendSpec& spec, std::shared_ptr<http::Transport> transport) {
  if (spec.kind == BackendKind::Mock) return std::make_unique<MockEmbeddingBackend>(spec);
  return std::make_unique<RemoteEmbeddingBackend>(spec, std::move(transport));
}

std::vector<Embedding> embed_sentences(EmbeddingBackend& backend,
                                       std::span<const std::string> texts) {
  if (texts.size() > backend.spec().max_job_texts) {
    throw Error(ErrorCode::InvalidArgument,
                "job of " + std::to_string(texts.size()) + " texts exceeds the limit of " +
                    std::to_string(backend.spec().max_job_texts));
  }
  for (const auto& t : texts) {
    if (t.empty()) throw Error(ErrorCode::EmptyText, "cannot embed an empty text");
  }
  if (texts.empty()) return {};
  auto out = backend.embed(texts);
  if (out.size() != texts.size()) {
    throw Error(ErrorCode::BackendUnavailable, "backend returned the wrong number of embeddings");
  }
  for (const auto& e : out) {
    if (e.dim() != backend.spec().dim) {
      throw Error(ErrorCode::DimensionMismatch, "backend returned dim " + std::to_string(e.dim()));
    }
  }
  return out;
}

}  // namespace zerostylus::embedding
