#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zerostylus/corpus.hpp"
#include "zerostylus/embedding.hpp"
#include "zerostylus/evaluation.hpp"
#include "zerostylus/generation.hpp"
#include "zerostylus/templates.hpp"
#include "zerostylus/transfer.hpp"

namespace zerostylus::cli {

struct JudgeConfig {
  std::string name;
  generation::GenerationBackendSpec spec;
};

struct EvaluationSettings {
  double delta = evaluation::kDefaultDelta;
  double semantic_weight = 0.5;
  std::size_t keyword_count = evaluation::kDefaultKeywordCount;
  evaluation::JudgingMode judging = evaluation::JudgingMode::PerAxis;
  std::string semantic_scorer = "token-f1";  // or "judge"
  std::string quality_judge;                 // judge name; first judge when empty
  std::size_t max_in_flight = 1;
  bool csv = false;
};

struct SamplingSettings {
  int n_exp = 2;
  double sigma = 3.0;
  std::uint64_t seed = 0;
};

struct Paths {
  std::string corpus;
  std::string source;
  std::string repos;
  std::string references;
  std::string output;
  std::string prompts;
};

/// Everything a run depends on. Loaded from a TOML-style file (or a JSON echo
/// written by an earlier run), then overridden from the command line.
struct PipelineConfig {
  embedding::EmbeddingBackendSpec embedding;
  generation::GenerationBackendSpec generation;
  std::vector<JudgeConfig> judges;  // a single mock judge when none are configured
  templates::ClusteringParams clustering;
  std::optional<double> epsilon;
  transfer::TransferConfig transfer;
  EvaluationSettings evaluation;
  SamplingSettings sampling;
  Paths paths;
  std::vector<std::string> abbreviations;
  /// True until a [judges.<name>] section replaces the built-in mock judge.
  bool default_judges = true;

  /// Range checks for every field; ConfigError on the first violation.
  void validate() const;
  corpus::SegmentationRules segmentation_rules() const;
  const JudgeConfig& quality_judge() const;
};

PipelineConfig default_config();

/// Sets `section.key` (or `judges.<name>.key`) from its textual inputs.
/// Unknown keys and unparseable values raise ConfigError.
void apply_setting(PipelineConfig& cfg, const std::string& key,
                   const std::vector<std::string>& inputs);
/// "section.key=value"; list values are comma separated.
void apply_assignment(PipelineConfig& cfg, const std::string& assignment);

/// TOML-style text, or a JSON object (optionally wrapped in {"config": ...}).
void apply_config_text(PipelineConfig& cfg, const std::string& text);
void apply_config_file(PipelineConfig& cfg, const std::filesystem::path& path);

/// Fully resolved configuration, loadable again with apply_config_text.
nlohmann::json to_json(const PipelineConfig& cfg);

}  // namespace zerostylus::cli
