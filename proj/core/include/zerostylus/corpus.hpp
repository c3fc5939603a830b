#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace zerostylus::corpus {

struct RawDocument {
  std::string doc_id;
  std::optional<std::string> author_id;
  std::string title;
  std::string body;

  bool operator==(const RawDocument&) const = default;
};

/// A sentence with its byte span [begin, end) into the document body and the
/// whitespace that follows it inside the paragraph (empty for the last one).
struct SentenceUnit {
  std::string sent_id;
  std::string text;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string separator_after;
};

struct Paragraph {
  std::string para_id;
  std::vector<SentenceUnit> sentences;
  /// Blank-line run after the paragraph; for the last paragraph, trailing
  /// whitespace of the body.
  std::string separator_after;

  /// Sentences joined with their recorded separators.
  std::string text() const;
};

struct SegmentedDocument {
  std::string doc_id;
  std::string leading;  // whitespace before the first sentence
  std::vector<Paragraph> paragraphs;

  /// Inverse of segment(): reproduces the original body byte for byte.
  std::string reassemble() const;
  std::size_t sentence_count() const;
};

/// Optional veto over a candidate sentence boundary. Receives the paragraph
/// text and the offset just past the terminal punctuation.
using BoundaryHook = std::function<bool(std::string_view paragraph, std::size_t offset)>;

struct SegmentationRules {
  /// Whitespace-delimited tokens (e.g. "e.g.") that never end a sentence.
  std::vector<std::string> abbreviations;
  BoundaryHook accept_boundary;
};

/// Paragraphs split on blank lines; sentences split after '.', '!' or '?'
/// when followed by whitespace. Throws EmptyDocument on whitespace-only bodies.
SegmentedDocument segment(const RawDocument& doc, const SegmentationRules& rules = {});

nlohmann::json to_json(const SegmentedDocument& doc);

RawDocument document_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RawDocument& doc);

/// JSON-lines corpus, one document per line. Rejects duplicate doc_ids and
/// empty bodies.
std::vector<RawDocument> parse_corpus(std::string_view jsonl);
std::vector<RawDocument> load_corpus(const std::filesystem::path& path);
std::string to_jsonl(std::span<const RawDocument> docs);

struct ReferenceSample {
  std::string author_id;
  std::vector<RawDocument> documents;  // ordered by doc_id
  std::size_t total_chars = 0;
  double target_chars = 0.0;
  /// False when no author could reach sigma * |source| within +-20%; the
  /// closest achievable subset is returned instead.
  bool within_tolerance = true;
};

inline constexpr double kLengthTolerance = 0.20;

/// Picks one author at random (seeded) and the n_exp of their documents whose
/// total length is closest to sigma times the source length.
ReferenceSample sample_reference_set(std::span<const RawDocument> corpus,
                                     const RawDocument& source, int n_exp, double sigma,
                                     std::uint64_t rng_seed);

}  // namespace zerostylus::corpus
