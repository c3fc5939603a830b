#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zerostylus/corpus.hpp"
#include "zerostylus/embedding.hpp"
#include "zerostylus/generation.hpp"
#include "zerostylus/prompts.hpp"

namespace zerostylus::templates {

using embedding::Embedding;

inline constexpr int kFormatVersion = 1;

struct ClusteringParams {
  /// Neighbourhood radius; derived with the k-distance heuristic when unset.
  std::optional<double> eps;
  std::size_t min_pts = 3;
};

struct SentenceTemplate {
  int template_id = 0;
  Embedding centroid;
  std::string medoid_text;
  std::string medoid_sent_id;
  std::size_t member_count = 1;
  std::optional<std::string> abstracted_pattern;

  /// Pattern when the extractor produced one, the medoid sentence otherwise.
  const std::string& prompt_text() const noexcept {
    return abstracted_pattern ? *abstracted_pattern : medoid_text;
  }

  bool operator==(const SentenceTemplate&) const = default;
};

struct SentenceRepo {
  std::vector<SentenceTemplate> templates;
  std::string backend_id;
  std::size_t dim = 0;
  double eps = 0.0;
  std::size_t min_pts = 0;

  bool empty() const noexcept { return templates.empty(); }
  const SentenceTemplate& at(int template_id) const;
  bool operator==(const SentenceRepo&) const = default;
};

struct SentenceInput {
  std::string sent_id;
  std::string text;
  Embedding embedding;
};

struct SentenceRepoBuild {
  SentenceRepo repo;
  /// Raw DBSCAN label per input: cluster index, or -1 for noise.
  std::vector<int> labels;
  /// Template id each input ended up in.
  std::vector<int> template_of;
  std::size_t cluster_count = 0;
  std::size_t noise_count = 0;
};

/// Density-based clustering over euclidean distance. A point is core when at
/// least min_pts points (itself included) lie within eps. Border points join
/// the cluster of their nearest core neighbour (lowest index on ties), which
/// makes the labelling independent of visiting order.
std::vector<int> dbscan(std::span<const Embedding> points, double eps, std::size_t min_pts);

/// 90th-percentile distance to the k-th nearest other point.
double k_distance_eps(std::span<const Embedding> points, std::size_t k);

/// Clusters become templates (centroid = mean, medoid = member nearest the
/// centroid); noise points become singleton templates. Ids ascend by cluster
/// size (descending), then smallest member sent_id. Templates with identical
/// centroids are merged.
SentenceRepoBuild build_sentence_repo(std::span<const SentenceInput> sentences,
                                      const ClusteringParams& params);

/// Fills abstracted_pattern from the extractor. On BackendUnavailable the
/// template is returned untouched and a warning is logged.
SentenceTemplate abstract_template(generation::GenerationBackend& extractor,
                                   const prompts::PromptLibrary& prompts,
                                   SentenceTemplate tmpl);

struct ParagraphTemplate {
  int template_id = 0;
  Embedding vector;
  std::string exemplar_para_id;
  std::string exemplar_text;
  std::vector<int> sentence_template_ids;
  std::size_t member_count = 1;

  bool operator==(const ParagraphTemplate&) const = default;
};

/// Every pair of template vectors is more than epsilon apart.
struct ParagraphRepo {
  std::vector<ParagraphTemplate> templates;
  double epsilon = 0.0;
  std::string backend_id;
  std::size_t dim = 0;

  bool empty() const noexcept { return templates.empty(); }
  const ParagraphTemplate& at(int template_id) const;
  bool operator==(const ParagraphRepo&) const = default;
};

struct InsertResult {
  ParagraphRepo repo;
  bool inserted = false;
  /// The new template, or the nearest existing one whose count was bumped.
  int template_id = 0;
};

/// Appends a template iff the repo is empty or the nearest existing vector is
/// farther than epsilon; otherwise increments the nearest template's count.
InsertResult insert_paragraph(const ParagraphRepo& repo, const corpus::Paragraph& para,
                              const Embedding& paragraph_embedding,
                              std::span<const int> sentence_matches);

/// Half the median pairwise distance; 0.5 with fewer than two vectors.
double default_epsilon(std::span<const Embedding> vectors);

nlohmann::json to_json(const SentenceRepo& repo);
nlohmann::json to_json(const ParagraphRepo& repo);
SentenceRepo sentence_repo_from_json(const nlohmann::json& j,
                                     const std::optional<std::string>& expected_backend = {});
ParagraphRepo paragraph_repo_from_json(const nlohmann::json& j,
                                       const std::optional<std::string>& expected_backend = {});

void save_repo(const SentenceRepo& repo, const std::filesystem::path& path);
void save_repo(const ParagraphRepo& repo, const std::filesystem::path& path);

/// Throws VersionMismatch, BackendMismatch (when expected_backend is given)
/// or CorruptFile, re-checking every repository invariant.
SentenceRepo load_sentence_repo(const std::filesystem::path& path,
                                const std::optional<std::string>& expected_backend = {});
ParagraphRepo load_paragraph_repo(const std::filesystem::path& path,
                                  const std::optional<std::string>& expected_backend = {});

}  // namespace zerostylus::templates
