#include "zerostylus/templates.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <spdlog/spdlog.h>

#include "zerostylus/error.hpp"
#include "zerostylus/util.hpp"

namespace zerostylus::templates {

using embedding::euclidean_distance;

namespace {

constexpr double kMinRadius = 1e-9;
constexpr double kFallbackRadius = 0.5;

double nearest_rank_percentile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

void check_same_space(std::span<const Embedding> points) {
  for (const auto& p : points) embedding::require_compatible(points.front(), p);
}

}  // namespace

const SentenceTemplate& SentenceRepo::at(int template_id) const {
  if (template_id < 0 || static_cast<std::size_t>(template_id) >= templates.size()) {
    throw Error(ErrorCode::InvalidArgument, "no sentence template " + std::to_string(template_id));
  }
  return templates[static_cast<std::size_t>(template_id)];
}

const ParagraphTemplate& ParagraphRepo::at(int template_id) const {
  if (template_id < 0 || static_cast<std::size_t>(template_id) >= templates.size()) {
    throw Error(ErrorCode::InvalidArgument, "no paragraph template " + std::to_string(template_id));
  }
  return templates[static_cast<std::size_t>(template_id)];
}

std::vector<int> dbscan(std::span<const Embedding> points, double eps, std::size_t min_pts) {
  const std::size_t n = points.size();
  if (n == 0) return {};
  check_same_space(points);

  std::vector<std::vector<std::size_t>> neighbours(n);
  for (std::size_t i = 0; i < n; ++i) {
    neighbours[i].push_back(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      if (euclidean_distance(points[i], points[j]) <= eps) {
        neighbours[i].push_back(j);
        neighbours[j].push_back(i);
      }
    }
  }
  std::vector<bool> core(n);
  for (std::size_t i = 0; i < n; ++i) core[i] = neighbours[i].size() >= min_pts;

  std::vector<int> labels(n, -1);
  int next = 0;
  for (std::size_t seed = 0; seed < n; ++seed) {
    if (!core[seed] || labels[seed] != -1) continue;
    std::vector<std::size_t> frontier{seed};
    labels[seed] = next;
    while (!frontier.empty()) {
      const auto p = frontier.back();
      frontier.pop_back();
      for (auto q : neighbours[p]) {
        if (core[q] && labels[q] == -1) {
          labels[q] = next;
          frontier.push_back(q);
        }
      }
    }
    ++next;
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) continue;
    double best = std::numeric_limits<double>::infinity();
    for (auto q : neighbours[i]) {
      if (!core[q]) continue;
      const double d = euclidean_distance(points[i], points[q]);
      if (d < best) {  // neighbours are scanned in ascending index within ties
        best = d;
        labels[i] = labels[q];
      }
    }
  }
  return labels;
}

double k_distance_eps(std::span<const Embedding> points, std::size_t k) {
  if (points.size() < 2) return kFallbackRadius;
  check_same_space(points);
  k = std::max<std::size_t>(k, 1);
  std::vector<double> kth;
  kth.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::vector<double> d;
    d.reserve(points.size() - 1);
    for (std::size_t j = 0; j < points.size(); ++j) {
      if (i != j) d.push_back(euclidean_distance(points[i], points[j]));
    }
    std::sort(d.begin(), d.end());
    kth.push_back(d[std::min(k, d.size()) - 1]);
  }
  return std::max(nearest_rank_percentile(std::move(kth), 0.9), kMinRadius);
}

SentenceRepoBuild build_sentence_repo(std::span<const SentenceInput> sentences,
                                      const ClusteringParams& params) {
  if (sentences.empty()) throw Error(ErrorCode::EmptyList, "no sentences to cluster");
  if (params.min_pts < 1) throw Error(ErrorCode::InvalidArgument, "min_pts must be >= 1");

  std::vector<Embedding> points;
  points.reserve(sentences.size());
  for (const auto& s : sentences) points.push_back(s.embedding);
  check_same_space(points);

  const double eps = params.eps ? *params.eps : k_distance_eps(points, params.min_pts);
  if (!(eps > 0.0) || !std::isfinite(eps)) {
    throw Error(ErrorCode::InvalidArgument, "clustering eps must be positive");
  }

  SentenceRepoBuild out;
  out.labels = dbscan(points, eps, params.min_pts);

  // Group members: one group per cluster, one per noise point.
  std::map<int, std::vector<std::size_t>> clusters;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (out.labels[i] < 0) {
      groups.push_back({i});
      ++out.noise_count;
    } else {
      clusters[out.labels[i]].push_back(i);
    }
  }
  out.cluster_count = clusters.size();
  for (auto& [label, members] : clusters) groups.push_back(std::move(members));

  auto centroid_of = [&](const std::vector<std::size_t>& members) {
    std::vector<Embedding> es;
    es.reserve(members.size());
    for (auto m : members) es.push_back(points[m]);
    return embedding::mean_pool(es);
  };

  // Merge groups whose centroids coincide exactly (e.g. duplicated noise).
  std::vector<Embedding> keys;
  std::vector<std::vector<std::size_t>> merged;
  for (auto& g : groups) {
    auto c = centroid_of(g);
    auto it = std::find(keys.begin(), keys.end(), c);
    if (it == keys.end()) {
      keys.push_back(std::move(c));
      merged.push_back(std::move(g));
    } else {
      auto& target = merged[static_cast<std::size_t>(it - keys.begin())];
      target.insert(target.end(), g.begin(), g.end());
    }
  }
  std::vector<Embedding> centroids;
  centroids.reserve(merged.size());
  for (auto& g : merged) {
    std::sort(g.begin(), g.end());
    centroids.push_back(centroid_of(g));
  }

  auto smallest_id = [&](const std::vector<std::size_t>& g) {
    const std::string* best = &sentences[g.front()].sent_id;
    for (auto m : g) best = std::min(best, &sentences[m].sent_id,
                                     [](auto* a, auto* b) { return *a < *b; });
    return *best;
  };
  std::vector<std::size_t> order(merged.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::string> first_ids;
  for (const auto& g : merged) first_ids.push_back(smallest_id(g));
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (merged[a].size() != merged[b].size()) return merged[a].size() > merged[b].size();
    return first_ids[a] < first_ids[b];
  });

  out.repo.backend_id = points.front().backend_id();
  out.repo.dim = points.front().dim();
  out.repo.eps = eps;
  out.repo.min_pts = params.min_pts;
  out.template_of.assign(sentences.size(), -1);
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const auto& g = merged[order[rank]];
    const auto& c = centroids[order[rank]];
    std::size_t medoid = g.front();
    double best = std::numeric_limits<double>::infinity();
    for (auto m : g) {
      const double d = euclidean_distance(points[m], c);
      if (d < best || (d == best && sentences[m].sent_id < sentences[medoid].sent_id)) {
        best = d;
        medoid = m;
      }
    }
    const int id = static_cast<int>(rank);
    out.repo.templates.push_back(SentenceTemplate{.template_id = id,
                                                  .centroid = c,
                                                  .medoid_text = sentences[medoid].text,
                                                  .medoid_sent_id = sentences[medoid].sent_id,
                                                  .member_count = g.size(),
                                                  .abstracted_pattern = std::nullopt});
    for (auto m : g) out.template_of[m] = id;
  }
  return out;
}

SentenceTemplate abstract_template(generation::GenerationBackend& extractor,
                                   const prompts::PromptLibrary& prompts, SentenceTemplate tmpl) {
  if (tmpl.medoid_text.empty()) {
    throw Error(ErrorCode::InvalidArgument, "template has no medoid text to abstract");
  }
  generation::GenerationRequest req;
  req.stage = generation::Stage::Abstract;
  req.fields = {{"template_text", tmpl.medoid_text}};
  req.prompt = prompts.render("extract", req.stage, req.fields);
  try {
    const auto pattern = std::string(trim(generation::call(extractor, req)));
    if (!pattern.empty()) tmpl.abstracted_pattern = pattern;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::BackendUnavailable && e.code() != ErrorCode::ContextOverflow) throw;
    spdlog::warn("template {} left unabstracted: {}", tmpl.template_id, e.what());
    tmpl.abstracted_pattern.reset();
  }
  return tmpl;
}

InsertResult insert_paragraph(const ParagraphRepo& repo, const corpus::Paragraph& para,
                              const Embedding& paragraph_embedding,
                              std::span<const int> sentence_matches) {
  if (!(repo.epsilon > 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be positive");
  if (paragraph_embedding.backend_id() != repo.backend_id) {
    throw Error(ErrorCode::BackendMismatch,
                "'" + paragraph_embedding.backend_id() + "' vs repo '" + repo.backend_id + "'");
  }
  if (repo.dim != 0 && paragraph_embedding.dim() != repo.dim) {
    throw Error(ErrorCode::DimensionMismatch, std::to_string(paragraph_embedding.dim()) + " vs " +
                                                  std::to_string(repo.dim));
  }
  if (sentence_matches.size() != para.sentences.size()) {
    throw Error(ErrorCode::InvalidArgument, "one sentence match per exemplar sentence required");
  }

  InsertResult out{repo, false, 0};
  out.repo.dim = paragraph_embedding.dim();
  if (!repo.templates.empty()) {
    std::size_t nearest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < repo.templates.size(); ++i) {
      const double d = euclidean_distance(paragraph_embedding, repo.templates[i].vector);
      if (d < best) {
        best = d;
        nearest = i;
      }
    }
    if (best <= repo.epsilon) {
      ++out.repo.templates[nearest].member_count;
      out.template_id = repo.templates[nearest].template_id;
      return out;
    }
  }
  out.inserted = true;
  out.template_id = static_cast<int>(repo.templates.size());
  out.repo.templates.push_back(ParagraphTemplate{
      .template_id = out.template_id,
      .vector = paragraph_embedding,
      .exemplar_para_id = para.para_id,
      .exemplar_text = para.text(),
      .sentence_template_ids = std::vector<int>(sentence_matches.begin(), sentence_matches.end()),
      .member_count = 1});
  return out;
}

double default_epsilon(std::span<const Embedding> vectors) {
  if (vectors.size() < 2) return kFallbackRadius;
  check_same_space(vectors);
  std::vector<double> d;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    for (std::size_t j = i + 1; j < vectors.size(); ++j) {
      d.push_back(euclidean_distance(vectors[i], vectors[j]));
    }
  }
  std::sort(d.begin(), d.end());
  const std::size_t m = d.size();
  const double median = m % 2 ? d[m / 2] : 0.5 * (d[m / 2 - 1] + d[m / 2]);
  return std::max(0.5 * median, kMinRadius);
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr const char* kSentenceKind = "sentence_repo";
constexpr const char* kParagraphKind = "paragraph_repo";

[[noreturn]] void corrupt(const std::string& what) { throw Error(ErrorCode::CorruptFile, what); }

void check_header(const nlohmann::json& j, const char* kind,
                  const std::optional<std::string>& expected_backend) {
  if (!j.is_object()) corrupt("repository file is not a JSON object");
  const auto version = j.find("format_version");
  if (version == j.end() || !version->is_number_integer()) corrupt("missing format_version");
  if (version->get<int>() != kFormatVersion) {
    throw Error(ErrorCode::VersionMismatch, "format_version " + version->dump() + ", expected " +
                                                std::to_string(kFormatVersion));
  }
  if (j.value("kind", std::string{}) != kind) corrupt(std::string("expected a ") + kind);
  if (expected_backend && j.value("backend_id", std::string{}) != *expected_backend) {
    throw Error(ErrorCode::BackendMismatch, "repository built with '" +
                                                j.value("backend_id", std::string{}) +
                                                "', expected '" + *expected_backend + "'");
  }
}

Embedding read_vector(const nlohmann::json& v, const std::string& backend, std::size_t dim) {
  if (!v.is_array() || v.size() != dim) corrupt("template vector does not match dim");
  std::vector<double> values;
  values.reserve(dim);
  for (const auto& x : v) {
    if (!x.is_number()) corrupt("non-numeric vector component");
    values.push_back(x.get<double>());
  }
  try {
    return Embedding(std::move(values), backend);
  } catch (const Error& e) {
    corrupt(e.what());
  }
}

nlohmann::json vector_json(const Embedding& e) {
  return nlohmann::json(std::vector<double>(e.values().begin(), e.values().end()));
}

template <typename F>
auto guarded(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    corrupt(std::string("malformed repository: ") + e.what());
  }
}

}  // namespace

nlohmann::json to_json(const SentenceRepo& repo) {
  nlohmann::json ts = nlohmann::json::array();
  for (const auto& t : repo.templates) {
    ts.push_back({{"id", t.template_id},
                  {"vector", vector_json(t.centroid)},
                  {"medoid_text", t.medoid_text},
                  {"medoid_sent_id", t.medoid_sent_id},
                  {"member_count", t.member_count},
                  {"pattern", t.abstracted_pattern ? nlohmann::json(*t.abstracted_pattern)
                                                   : nlohmann::json(nullptr)}});
  }
  return {{"format_version", kFormatVersion},
          {"kind", kSentenceKind},
          {"backend_id", repo.backend_id},
          {"dim", repo.dim},
          {"clustering_params", {{"eps", repo.eps}, {"min_pts", repo.min_pts}}},
          {"templates", ts}};
}

nlohmann::json to_json(const ParagraphRepo& repo) {
  nlohmann::json ts = nlohmann::json::array();
  for (const auto& t : repo.templates) {
    ts.push_back({{"id", t.template_id},
                  {"vector", vector_json(t.vector)},
                  {"exemplar_para_id", t.exemplar_para_id},
                  {"exemplar_text", t.exemplar_text},
                  {"sentence_template_ids", t.sentence_template_ids},
                  {"member_count", t.member_count}});
  }
  return {{"format_version", kFormatVersion},
          {"kind", kParagraphKind},
          {"backend_id", repo.backend_id},
          {"dim", repo.dim},
          {"epsilon", repo.epsilon},
          {"templates", ts}};
}

SentenceRepo sentence_repo_from_json(const nlohmann::json& j,
                                     const std::optional<std::string>& expected_backend) {
  check_header(j, kSentenceKind, expected_backend);
  return guarded([&] {
    SentenceRepo repo;
    repo.backend_id = j.at("backend_id").get<std::string>();
    repo.dim = j.at("dim").get<std::size_t>();
    repo.eps = j.at("clustering_params").at("eps").get<double>();
    repo.min_pts = j.at("clustering_params").at("min_pts").get<std::size_t>();
    if (repo.dim == 0 && !j.at("templates").empty()) corrupt("dim must be positive");
    for (const auto& t : j.at("templates")) {
      const int id = t.at("id").get<int>();
      if (id != static_cast<int>(repo.templates.size())) corrupt("template ids are not dense");
      const auto count = t.at("member_count").get<std::size_t>();
      if (count < 1) corrupt("member_count must be >= 1");
      SentenceTemplate tmpl{.template_id = id,
                            .centroid = read_vector(t.at("vector"), repo.backend_id, repo.dim),
                            .medoid_text = t.at("medoid_text").get<std::string>(),
                            .medoid_sent_id = t.value("medoid_sent_id", std::string{}),
                            .member_count = count,
                            .abstracted_pattern = std::nullopt};
      if (tmpl.medoid_text.empty()) corrupt("empty medoid_text");
      if (const auto& p = t.at("pattern"); !p.is_null()) tmpl.abstracted_pattern = p.get<std::string>();
      for (const auto& other : repo.templates) {
        if (other.centroid == tmpl.centroid) corrupt("duplicate centroids");
      }
      repo.templates.push_back(std::move(tmpl));
    }
    return repo;
  });
}

ParagraphRepo paragraph_repo_from_json(const nlohmann::json& j,
                                       const std::optional<std::string>& expected_backend) {
  check_header(j, kParagraphKind, expected_backend);
  return guarded([&] {
    ParagraphRepo repo;
    repo.backend_id = j.at("backend_id").get<std::string>();
    repo.dim = j.at("dim").get<std::size_t>();
    repo.epsilon = j.at("epsilon").get<double>();
    if (!(repo.epsilon > 0.0)) corrupt("epsilon must be positive");
    if (repo.dim == 0 && !j.at("templates").empty()) corrupt("dim must be positive");
    for (const auto& t : j.at("templates")) {
      const int id = t.at("id").get<int>();
      if (id != static_cast<int>(repo.templates.size())) corrupt("template ids are not dense");
      ParagraphTemplate tmpl{
          .template_id = id,
          .vector = read_vector(t.at("vector"), repo.backend_id, repo.dim),
          .exemplar_para_id = t.at("exemplar_para_id").get<std::string>(),
          .exemplar_text = t.at("exemplar_text").get<std::string>(),
          .sentence_template_ids = t.at("sentence_template_ids").get<std::vector<int>>(),
          .member_count = t.at("member_count").get<std::size_t>()};
      if (tmpl.member_count < 1) corrupt("member_count must be >= 1");
      for (const auto& other : repo.templates) {
        if (!(euclidean_distance(other.vector, tmpl.vector) > repo.epsilon)) {
          corrupt("templates " + std::to_string(other.template_id) + " and " +
                  std::to_string(id) + " are within epsilon");
        }
      }
      repo.templates.push_back(std::move(tmpl));
    }
    return repo;
  });
}

namespace {

nlohmann::json read_json(const std::filesystem::path& path) {
  const auto text = read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    corrupt(path.string() + ": " + e.what());
  }
}

}  // namespace

void save_repo(const SentenceRepo& repo, const std::filesystem::path& path) {
  write_file_atomic(path, to_json(repo).dump(2) + "\n");
}

void save_repo(const ParagraphRepo& repo, const std::filesystem::path& path) {
  write_file_atomic(path, to_json(repo).dump(2) + "\n");
}

SentenceRepo load_sentence_repo(const std::filesystem::path& path,
                                const std::optional<std::string>& expected_backend) {
  return sentence_repo_from_json(read_json(path), expected_backend);
}

ParagraphRepo load_paragraph_repo(const std::filesystem::path& path,
                                  const std::optional<std::string>& expected_backend) {
  return paragraph_repo_from_json(read_json(path), expected_backend);
}

}  // namespace zerostylus::templates
