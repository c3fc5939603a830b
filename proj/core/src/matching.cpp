#include "zerostylus/matching.hpp"

#include <limits>

#include <spdlog/spdlog.h>

#include "zerostylus/error.hpp"

namespace zerostylus::matching {

namespace {

void check_query(const Embedding& query, const std::string& backend_id, std::size_t dim) {
  if (query.backend_id() != backend_id) {
    throw Error(ErrorCode::BackendMismatch,
                "query from '" + query.backend_id() + "', repository from '" + backend_id + "'");
  }
  if (query.dim() != dim) {
    throw Error(ErrorCode::DimensionMismatch,
                "query dim " + std::to_string(query.dim()) + ", repository dim " + std::to_string(dim));
  }
}

// True when (score, id) ranks above (best_score, best_id).
bool better(double score, int id, double best_score, int best_id) {
  return score > best_score || (score == best_score && id < best_id);
}

}  // namespace

MatchResult match_sentence(const templates::SentenceRepo& repo, const Embedding& query,
                           std::string sent_id, double low_confidence_margin) {
  if (repo.empty()) throw Error(ErrorCode::EmptyRepo, "sentence repository is empty");
  check_query(query, repo.backend_id, repo.dim);

  constexpr double kNone = -std::numeric_limits<double>::infinity();
  double best = kNone, second = kNone;
  int best_id = std::numeric_limits<int>::max(), second_id = std::numeric_limits<int>::max();
  for (const auto& t : repo.templates) {
    const double s = embedding::cosine_similarity(query, t.centroid);
    if (better(s, t.template_id, best, best_id)) {
      second = best;
      second_id = best_id;
      best = s;
      best_id = t.template_id;
    } else if (better(s, t.template_id, second, second_id)) {
      second = s;
      second_id = t.template_id;
    }
  }

  MatchResult out;
  out.sent_id = std::move(sent_id);
  out.template_id = best_id;
  out.score = best;
  if (repo.templates.size() > 1) {
    out.runner_up_id = second_id;
    out.margin = best - second;
    out.low_confidence = out.margin < low_confidence_margin;
  }
  return out;
}

ParagraphMatch match_paragraph(const templates::ParagraphRepo& repo, const Embedding& query,
                               std::string para_id) {
  if (repo.empty()) throw Error(ErrorCode::EmptyRepo, "paragraph repository is empty");
  check_query(query, repo.backend_id, repo.dim);

  ParagraphMatch out;
  out.para_id = std::move(para_id);
  out.template_id = std::numeric_limits<int>::max();
  out.distance = std::numeric_limits<double>::infinity();
  for (const auto& t : repo.templates) {
    const double d = embedding::euclidean_distance(query, t.vector);
    if (d < out.distance || (d == out.distance && t.template_id < out.template_id)) {
      out.distance = d;
      out.template_id = t.template_id;
    }
  }
  return out;
}

std::vector<Embedding> embed_paragraph(const corpus::Paragraph& paragraph,
                                       embedding::EmbeddingBackend& backend) {
  std::vector<std::string> texts;
  texts.reserve(paragraph.sentences.size());
  for (const auto& s : paragraph.sentences) texts.push_back(s.text);
  return embedding::embed_sentences(backend, texts);
}

FullMatch match_paragraph_full(const templates::SentenceRepo& s_repo,
                               const templates::ParagraphRepo& p_repo,
                               const corpus::Paragraph& paragraph,
                               embedding::EmbeddingBackend& backend,
                               const embedding::Aggregator& aggregate,
                               double low_confidence_margin) {
  if (s_repo.empty()) throw Error(ErrorCode::EmptyRepo, "sentence repository is empty");
  if (p_repo.empty()) throw Error(ErrorCode::EmptyRepo, "paragraph repository is empty");

  auto embeddings = embed_paragraph(paragraph, backend);
  auto pooled = aggregate(embeddings);
  FullMatch out{match_paragraph(p_repo, pooled, paragraph.para_id), {}, {}, pooled};
  out.sentences.reserve(embeddings.size());
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    out.sentences.push_back(match_sentence(s_repo, embeddings[i], paragraph.sentences[i].sent_id,
                                           low_confidence_margin));
    if (out.sentences.back().low_confidence) {
      spdlog::debug("low-confidence template match for {} (margin {:.4f})",
                    paragraph.sentences[i].sent_id, out.sentences.back().margin);
    }
  }
  out.sentence_embeddings = std::move(embeddings);
  return out;
}

}  // namespace zerostylus::matching
