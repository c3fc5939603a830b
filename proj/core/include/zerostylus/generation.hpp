#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <string>
#include <string_view>

#include "zerostylus/http.hpp"

namespace zerostylus::generation {

/// What a generation call is for. Remote backends only see the rendered
/// prompt; the mock backend derives its deterministic reply from the stage and
/// the placeholder fields.
enum class Stage {
  Abstract,         // sentence template -> slotted pattern
  Generate,         // template-conditioned sentence rewrite
  Refine,           // paragraph-level coherence pass over a window
  Direct,           // whole-document single-call rewrite
  Destylize,        // window -> style-free lines
  Restylize,        // style-free lines -> target style
  JudgeQuality,     // 0-10 naturalness rating
  JudgePairwise,    // signed margin in [-5, 5] favouring the first listed
  JudgeSimilarity,  // 0-1 semantic similarity
};

std::string_view to_string(Stage stage) noexcept;

using Fields = std::map<std::string, std::string>;

struct GenerationRequest {
  Stage stage = Stage::Generate;
  std::string prompt;
  Fields fields;
};

enum class BackendKind { Mock, Remote };

struct GenerationBackendSpec {
  std::string backend_id = "mock-gen";
  BackendKind kind = BackendKind::Mock;
  std::string endpoint;
  std::string model_name = "mock";
  std::size_t max_context_chars = 200000;
  double temperature = 0.0;
  std::string api_key_env;
  http::RetryPolicy retry;

  void validate() const;
};

class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  virtual const GenerationBackendSpec& spec() const noexcept = 0;
  virtual std::string generate(const GenerationRequest& request) = 0;
};

/// Deterministic offline stand-in:
///   Generate   "[S<id>|P<id>|T<k>|a=<alpha>] <source>" (absent parts omitted)
///   Refine     drafts one per line, first prefixed "[R<id>] "
///   Direct     "[DIRECT] <source>"
///   Destylize  lines unchanged; Restylize prefixes "[C<k>|a=<alpha>] "
///   Abstract   words longer than four characters become {SLOT}
///   Judge*     hash-derived scores
class MockGenerationBackend final : public GenerationBackend {
 public:
  explicit MockGenerationBackend(GenerationBackendSpec spec = {});
  const GenerationBackendSpec& spec() const noexcept override { return spec_; }
  std::string generate(const GenerationRequest& request) override;
  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  GenerationBackendSpec spec_;
  std::atomic<std::size_t> calls_{0};
};

/// Chat-completions style: POST {"model", "messages": [{"role", "content"}],
/// "temperature"} and read choices[0].message.content.
class RemoteGenerationBackend final : public GenerationBackend {
 public:
  RemoteGenerationBackend(GenerationBackendSpec spec, std::shared_ptr<http::Transport> transport);
  const GenerationBackendSpec& spec() const noexcept override { return spec_; }
  std::string generate(const GenerationRequest& request) override;

 private:
  GenerationBackendSpec spec_;
  std::shared_ptr<http::Transport> transport_;
};

std::unique_ptr<GenerationBackend> make_generation_backend(
    const GenerationBackendSpec& spec, std::shared_ptr<http::Transport> transport = nullptr);

/// Throws ContextOverflow when the prompt exceeds max_context_chars, then
/// forwards to the backend.
std::string call(GenerationBackend& backend, const GenerationRequest& request);

/// Replaces every word longer than four characters with "{SLOT}".
std::string slot_pattern(std::string_view text);

/// Hash-derived value in [0, 10] used by the mock judge.
double mock_quality(std::string_view axis, std::string_view text) noexcept;

}  // namespace zerostylus::generation
