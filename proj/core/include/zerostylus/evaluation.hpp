#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "zerostylus/embedding.hpp"
#include "zerostylus/generation.hpp"
#include "zerostylus/prompts.hpp"

namespace zerostylus::evaluation {

using embedding::Embedding;

/// Judges speak the generation wire format.
using JudgeBackendSpec = generation::GenerationBackendSpec;

/// (style consistency, content preservation, expression quality). Raw values
/// come from the scorers; normalized values are on 0-10.
struct TriAxialScore {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  std::string x_source;
  std::string y_source;
  std::string z_source;

  bool operator==(const TriAxialScore&) const = default;
};

double average_score(const TriAxialScore& v) noexcept;

// -- style consistency ------------------------------------------------------

/// Max cosine between the output and any reference paragraph embedding.
double score_style_consistency(const Embedding& output, std::span<const Embedding> references);
double score_style_consistency(std::string_view output_para,
                               std::span<const std::string> reference_paras,
                               embedding::EmbeddingBackend& backend);

// -- content preservation ---------------------------------------------------

/// Semantic similarity in [0, 1] of (candidate, reference).
using SemanticScorer = std::function<double(std::string_view, std::string_view)>;
using Keyworder = std::function<std::vector<std::string>(std::string_view)>;

SemanticScorer token_f1_scorer();
/// Asks a judge for a 0-1 similarity; replies outside [0, 1] raise RangeError.
SemanticScorer judge_similarity_scorer(generation::GenerationBackend& judge,
                                       const prompts::PromptLibrary& prompts);

inline constexpr std::size_t kDefaultKeywordCount = 10;

/// The k most frequent non-stopword tokens; ties broken alphabetically.
std::vector<std::string> top_keywords(std::string_view text, std::size_t k = kDefaultKeywordCount);
Keyworder frequency_keyworder(std::size_t k = kDefaultKeywordCount);
bool is_stopword(std::string_view token) noexcept;

struct ContentScore {
  double value = 0.0;
  std::optional<double> semantic;  // empty when the scorer failed
  double keyword_recall = 0.0;
  std::size_t source_keywords = 0;
  std::size_t kept_keywords = 0;
  std::vector<std::string> flags;
};

ContentScore score_content_preservation(std::string_view output_para,
                                        std::string_view source_para,
                                        const SemanticScorer& scorer, const Keyworder& keyworder,
                                        double semantic_weight = 0.5);

// -- expression quality -----------------------------------------------------

struct QualityScore {
  double value = 0.0;
  std::vector<std::string> flags;
};

/// Judge rating in [0, 10]. Empty text scores 0 (flagged) without a call;
/// out-of-range or unparseable replies raise RangeError.
QualityScore score_expression_quality(std::string_view output_para,
                                      generation::GenerationBackend& judge,
                                      const prompts::PromptLibrary& prompts);

/// First number in a judge reply; RangeError when there is none or it is not
/// finite.
double parse_judge_number(std::string_view reply);

// -- fusion -----------------------------------------------------------------

struct AxisBounds {
  double min = 0.0;
  double max = 0.0;
};

/// Per-axis min-max to [0, 10] over the cohort; a constant axis maps to 5.
std::vector<TriAxialScore> normalize_and_fuse(std::span<const TriAxialScore> raw);
std::array<AxisBounds, 3> cohort_bounds(std::span<const TriAxialScore> raw);

// -- pairwise protocol ------------------------------------------------------

double sigmoid(double v) noexcept;

/// Order-debiased preference for A given the judge margins with A listed
/// first (s_ab) and with B listed first (s_ba).
double pairwise_preference(double s_ab, double s_ba);

struct WinRate {
  std::size_t wins = 0;
  std::size_t losses = 0;
  std::size_t ties = 0;

  std::size_t total() const noexcept { return wins + losses + ties; }
  double win_rate() const noexcept;
  double loss_rate() const noexcept;
  double tie_rate() const noexcept;
  bool operator==(const WinRate&) const = default;
};

inline constexpr double kDefaultDelta = 0.1;

/// win iff pref - 0.5 > delta, loss iff 0.5 - pref > delta, tie otherwise.
WinRate win_rate(std::span<const double> prefs, double delta = kDefaultDelta);

struct PairwiseRecord {
  std::string sample_id;
  std::string axis;
  double s_ab = 0.0;
  double s_ba = 0.0;
  double pref_a = 0.5;

  bool operator==(const PairwiseRecord&) const = default;
};

struct AdversarialSample {
  std::string sample_id;
  std::string source;
  std::string reference;
  std::string output_a;
  std::string output_b;
};

struct Judge {
  std::string name;
  generation::GenerationBackend* backend = nullptr;
};

enum class JudgingMode { PerAxis, Single };

struct AdversarialConfig {
  double delta = kDefaultDelta;
  JudgingMode mode = JudgingMode::PerAxis;
  std::size_t max_in_flight = 1;
  std::string method_a = "A";
  std::string method_b = "B";

  void validate() const;
};

struct AxisTally {
  std::string axis;
  WinRate rates;
};

struct JudgeReport {
  std::string judge;
  std::string model_name;
  std::vector<PairwiseRecord> records;
  std::vector<AxisTally> axes;
  std::vector<std::string> excluded;  // sample ids dropped after a judge failure
};

struct AdversarialReport {
  AdversarialConfig config;
  std::size_t sample_count = 0;
  std::vector<JudgeReport> judges;
};

/// Axis keys judged in a run: X, Y, Z or the single "overall" margin.
std::vector<std::string> judged_axes(JudgingMode mode);

/// Queries every judge with both orderings of every sample (per axis in
/// PerAxis mode). A sample with any failed or out-of-range reply is left out
/// of that judge's tallies.
AdversarialReport adversarial_run(std::span<const AdversarialSample> samples,
                                  std::span<const Judge> judges,
                                  const prompts::PromptLibrary& prompts,
                                  const AdversarialConfig& cfg);

// -- tri-axial run ----------------------------------------------------------

struct TriAxialSample {
  std::string sample_id;
  std::string method;
  std::string source;
  std::string output;
  std::vector<std::string> references;
};

struct TriAxialConfig {
  double semantic_weight = 0.5;
  std::size_t keyword_count = kDefaultKeywordCount;

  void validate() const;
};

struct Scorers {
  embedding::EmbeddingBackend* embedder = nullptr;
  SemanticScorer semantic;
  std::string semantic_name = "token-f1";
  generation::GenerationBackend* quality_judge = nullptr;
  const prompts::PromptLibrary* prompts = nullptr;
};

struct SampleRow {
  std::string sample_id;
  std::string method;
  TriAxialScore raw;
  TriAxialScore normalized;
  double average = 0.0;
  std::vector<std::string> flags;
};

struct MethodSummary {
  std::string method;
  std::size_t samples = 0;
  TriAxialScore mean;
  double average = 0.0;
};

struct TriAxialReport {
  TriAxialConfig config;
  std::array<AxisBounds, 3> bounds{};
  std::vector<SampleRow> rows;
  std::vector<MethodSummary> methods;  // in first-appearance order
};

TriAxialReport triaxial_evaluate(std::span<const TriAxialSample> samples, const Scorers& scorers,
                                 const TriAxialConfig& cfg = {});

nlohmann::json to_json(const TriAxialReport& report);
nlohmann::json to_json(const AdversarialReport& report);

/// Method, X, Y, Z, Average
std::string triaxial_csv(const TriAxialReport& report);
/// Judge, Axis, Win, Loss, Tie, Excluded (rates in percent)
std::string adversarial_csv(const AdversarialReport& report);

}  // namespace zerostylus::evaluation
