#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "zerostylus/corpus.hpp"
#include "zerostylus/embedding.hpp"
#include "zerostylus/generation.hpp"
#include "zerostylus/matching.hpp"
#include "zerostylus/prompts.hpp"
#include "zerostylus/templates.hpp"

namespace zerostylus::transfer {

/// Pipeline variants. StructuredRewritten is the full two-level pipeline; the
/// others are the comparison baselines and ablations.
enum class Variant {
  StructuredRewritten,  // sentence + paragraph templates, refinement
  SentencePattern,      // sentence templates only
  TemplateOnly,         // raw reference sentences, no clustering, no paragraph templates
  DirectPrompt,         // one call with the whole reference and source
  ConvTransfer,         // destylize then restylize per window
};

std::string_view to_string(Variant v) noexcept;
/// Throws ConfigError on an unknown name.
Variant parse_variant(std::string_view name);
std::span<const Variant> all_variants() noexcept;

bool needs_sentence_repo(Variant v) noexcept;
bool needs_paragraph_repo(Variant v) noexcept;
bool needs_references(Variant v) noexcept;

struct TransferConfig {
  double alpha = 0.5;
  std::size_t window_sentences = 8;
  Variant variant = Variant::StructuredRewritten;
  /// Reference sentences shown to TemplateOnly / ConvTransfer prompts.
  std::size_t reference_k = 3;
  double low_confidence_margin = matching::kDefaultLowConfidenceMargin;
  std::size_t max_parallel_paragraphs = 1;
  /// Wall-clock timings in the trace; off by default so traces stay reproducible.
  bool trace_timing = false;

  void validate() const;
};

/// Natural-language strength instruction injected next to alpha.
std::string style_instruction(double alpha);

struct TraceRecord {
  std::string sent_id;
  std::size_t window = 0;
  std::optional<int> sentence_template_id;
  std::optional<double> match_score;
  std::optional<double> match_margin;
  bool low_confidence = false;
  std::optional<int> paragraph_template_id;
  std::string prompt;
  std::string raw_generation;
  std::string refined_text;

  bool operator==(const TraceRecord&) const = default;
};

struct StageCall {
  std::string stage;
  std::string prompt;
  std::string raw;

  bool operator==(const StageCall&) const = default;
};

struct WindowTrace {
  std::size_t first_sentence = 0;
  std::size_t size = 0;
  std::vector<StageCall> calls;  // window-level calls (refine, destylize, restylize)
  bool refinement_skipped = false;
  bool alignment_failed = false;
  int refine_attempts = 0;

  bool operator==(const WindowTrace&) const = default;
};

struct ParagraphTrace {
  std::string para_id;
  std::optional<int> paragraph_template_id;
  std::optional<double> paragraph_distance;
  std::vector<TraceRecord> records;  // one per source sentence
  std::vector<WindowTrace> windows;
  /// Windows halved after a ContextOverflow.
  std::size_t window_splits = 0;
  std::optional<double> elapsed_ms;

  bool operator==(const ParagraphTrace&) const = default;
};

struct TransferTrace {
  std::string doc_id;
  Variant variant = Variant::StructuredRewritten;
  double alpha = 0.0;
  std::string generation_backend;
  std::string generation_model;
  std::string embedding_backend;
  /// Single-call variants do not keep the paragraph structure.
  bool structure_exempt = false;
  std::string document_prompt;
  std::string document_generation;
  std::vector<ParagraphTrace> paragraphs;

  std::size_t record_count() const noexcept;
};

struct StylizedParagraph {
  std::string para_id;
  std::vector<std::string> sentences;
  std::string text;
  std::string separator_after;

  bool operator==(const StylizedParagraph&) const = default;
};

struct StylizedDocument {
  std::string doc_id;
  Variant variant = Variant::StructuredRewritten;
  std::string leading;
  std::vector<StylizedParagraph> paragraphs;
  std::string text;
  TransferTrace trace;
};

/// Segmented reference documents plus the flat sentence list used for
/// excerpt retrieval.
struct ReferenceMaterial {
  struct Sentence {
    std::string sent_id;
    std::string text;
  };
  std::vector<corpus::SegmentedDocument> documents;
  std::vector<Sentence> sentences;
  std::string full_text;

  static ReferenceMaterial from_documents(std::span<const corpus::RawDocument> docs,
                                          const corpus::SegmentationRules& rules = {});
};

struct TransferResources {
  const templates::SentenceRepo* sentence_repo = nullptr;
  const templates::ParagraphRepo* paragraph_repo = nullptr;
  const ReferenceMaterial* references = nullptr;
  embedding::EmbeddingBackend* embedder = nullptr;
  generation::GenerationBackend* generator = nullptr;
  const prompts::PromptLibrary* prompts = nullptr;
  embedding::Aggregator aggregate = embedding::default_aggregator();
};

struct ParagraphResult {
  StylizedParagraph output;
  ParagraphTrace trace;

  bool operator==(const ParagraphResult&) const = default;
};

/// Called once per finished paragraph, in source order.
using ParagraphSink = std::function<void(std::size_t index, const ParagraphResult&)>;

/// Template-conditioned rewrite of one sentence. The prompt carries the
/// sentence template, the paragraph template, the source sentence and alpha.
/// alpha == 0 returns the source unchanged without a backend call.
std::string generate_sentence(generation::GenerationBackend& backend,
                              const prompts::PromptLibrary& prompts,
                              const corpus::SentenceUnit& sentence,
                              const templates::SentenceTemplate& sentence_template,
                              const templates::ParagraphTemplate& paragraph_template,
                              const TransferConfig& cfg,
                              std::span<const std::string> window_context = {},
                              std::string* prompt_out = nullptr);

struct RefineOutcome {
  std::vector<std::string> sentences;
  bool skipped = false;  // drafts returned unrefined
  int attempts = 0;
  std::string prompt;
  std::string raw;
};

/// One refinement call over a window of drafts. The reply must hold the
/// draft count +-1 sentences (one per line); otherwise one retry, then the
/// drafts are returned. Backend failures also fall back to the drafts.
RefineOutcome refine_paragraph(generation::GenerationBackend& backend,
                               const prompts::PromptLibrary& prompts,
                               std::span<const std::string> drafts,
                               const templates::ParagraphTemplate& paragraph_template,
                               const TransferConfig& cfg);

/// Full rewrite of one document. `resume` holds already-finished leading
/// paragraphs (from a checkpoint); `sink` sees every paragraph finished in this
/// call.
StylizedDocument transfer_document(const corpus::SegmentedDocument& source,
                                   const TransferResources& resources, const TransferConfig& cfg,
                                   std::span<const ParagraphResult> resume = {},
                                   const ParagraphSink& sink = {});

StylizedDocument run_variant(Variant variant, const corpus::SegmentedDocument& source,
                             const TransferResources& resources, TransferConfig cfg,
                             std::span<const ParagraphResult> resume = {},
                             const ParagraphSink& sink = {});

nlohmann::json to_json(const TransferTrace& trace);
nlohmann::json to_json(const ParagraphResult& result);
ParagraphResult paragraph_result_from_json(const nlohmann::json& j);

}  // namespace zerostylus::transfer
