#pragma once

#include <optional>
#include <string>
#include <vector>

#include "zerostylus/corpus.hpp"
#include "zerostylus/embedding.hpp"
#include "zerostylus/templates.hpp"

namespace zerostylus::matching {

using embedding::Embedding;

inline constexpr double kDefaultLowConfidenceMargin = 0.05;

struct MatchResult {
  std::string sent_id;
  int template_id = 0;
  double score = 0.0;  // cosine similarity to the chosen centroid
  std::optional<int> runner_up_id;
  double margin = 0.0;  // score - runner-up score; 0 without a runner-up
  bool low_confidence = false;

  bool operator==(const MatchResult&) const = default;
};

struct ParagraphMatch {
  std::string para_id;
  int template_id = 0;
  double distance = 0.0;

  bool operator==(const ParagraphMatch&) const = default;
};

/// Arg-max cosine over the sentence templates; ties go to the smallest id.
MatchResult match_sentence(const templates::SentenceRepo& repo, const Embedding& query,
                           std::string sent_id = {},
                           double low_confidence_margin = kDefaultLowConfidenceMargin);

/// Arg-min euclidean distance over the paragraph templates; ties go to the
/// smallest id.
ParagraphMatch match_paragraph(const templates::ParagraphRepo& repo, const Embedding& query,
                               std::string para_id = {});

struct FullMatch {
  ParagraphMatch paragraph;
  std::vector<MatchResult> sentences;
  std::vector<Embedding> sentence_embeddings;
  Embedding paragraph_embedding;
};

/// Embeds every sentence, pools them into the paragraph embedding and matches
/// both levels. Both repositories must be non-empty.
FullMatch match_paragraph_full(const templates::SentenceRepo& s_repo,
                               const templates::ParagraphRepo& p_repo,
                               const corpus::Paragraph& paragraph,
                               embedding::EmbeddingBackend& backend,
                               const embedding::Aggregator& aggregate = embedding::default_aggregator(),
                               double low_confidence_margin = kDefaultLowConfidenceMargin);

/// Embeddings for every sentence of a paragraph, in order.
std::vector<Embedding> embed_paragraph(const corpus::Paragraph& paragraph,
                                       embedding::EmbeddingBackend& backend);

}  // namespace zerostylus::matching
