#include "zerostylus/generation.hpp"

#include <cmath>
#include <sstream>

#include "zerostylus/error.hpp"
#include "zerostylus/util.hpp"

namespace zerostylus::generation {

std::string_view to_string(Stage stage) noexcept {
  switch (stage) {
    case Stage::Abstract: return "abstract";
    case Stage::Generate: return "generate";
    case Stage::Refine: return "refine";
    case Stage::Direct: return "direct";
    case Stage::Destylize: return "destylize";
    case Stage::Restylize: return "restylize";
    case Stage::JudgeQuality: return "quality";
    case Stage::JudgePairwise: return "pairwise";
    case Stage::JudgeSimilarity: return "similarity";
  }
  return "unknown";
}

void GenerationBackendSpec::validate() const {
  if (backend_id.empty()) throw Error(ErrorCode::ConfigError, "generation backend_id is empty");
  if (max_context_chars < 1000) {
    throw Error(ErrorCode::ConfigError, "max_context_chars must be >= 1000");
  }
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorCode::ConfigError, "temperature must be >= 0");
  }
  if (kind == BackendKind::Remote && endpoint.empty()) {
    throw Error(ErrorCode::ConfigError, "remote generation backend needs an endpoint");
  }
}

namespace {

bool is_word_byte(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

const std::string& field(const Fields& fields, const std::string& key) {
  static const std::string empty;
  auto it = fields.find(key);
  return it == fields.end() ? empty : it->second;
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) out += '\n';
    out += lines[i];
  }
  return out;
}

std::string mock_generate(const Fields& f) {
  std::string tag = "[";
  auto part = [&](const char* key, char prefix) {
    if (auto it = f.find(key); it != f.end()) {
      tag += prefix;
      tag += it->second;
      tag += '|';
    }
  };
  part("sentence_template_id", 'S');
  part("paragraph_template_id", 'P');
  part("reference_count", 'T');
  tag += "a=" + field(f, "alpha") + "] ";
  return tag + field(f, "source");
}

}  // namespace

std::string slot_pattern(std::string_view text) {
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_word_byte(static_cast<unsigned char>(text[i]))) {
      out += text[i++];
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
    const auto word = text.substr(i, j - i);
    out += char_length(word) > 4 ? std::string("{SLOT}") : std::string(word);
    i = j;
  }
  return out;
}

double mock_quality(std::string_view axis, std::string_view text) noexcept {
  const auto state = fnv1a("\x1f", fnv1a(axis));
  return static_cast<double>(fnv1a(text, state) % 10001) / 1000.0;
}

MockGenerationBackend::MockGenerationBackend(GenerationBackendSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
}

std::string MockGenerationBackend::generate(const GenerationRequest& request) {
  ++calls_;
  const Fields& f = request.fields;
  switch (request.stage) {
    case Stage::Abstract:
      return slot_pattern(field(f, "template_text"));
    case Stage::Generate:
      return mock_generate(f);
    case Stage::Refine: {
      auto lines = split_lines(field(f, "drafts"));
      if (!lines.empty()) lines.front() = "[R" + field(f, "paragraph_template_id") + "] " + lines.front();
      return join_lines(lines);
    }
    case Stage::Direct:
      return "[DIRECT] " + field(f, "source");
    case Stage::Destylize:
      return field(f, "window");
    case Stage::Restylize: {
      auto lines = split_lines(field(f, "window"));
      const std::string tag = "[C" + field(f, "reference_count") + "|a=" + field(f, "alpha") + "] ";
      for (auto& l : lines) l = tag + l;
      return join_lines(lines);
    }
    case Stage::JudgeQuality:
      return format_number(mock_quality(field(f, "axis"), field(f, "text")));
    case Stage::JudgePairwise: {
      const auto& axis = field(f, "axis");
      const double margin =
          (mock_quality(axis, field(f, "first")) - mock_quality(axis, field(f, "second"))) / 2.0;
      return format_number(margin);
    }
    case Stage::JudgeSimilarity:
      return format_number(token_f1(field(f, "candidate"), field(f, "reference")));
  }
  return {};
}

RemoteGenerationBackend::RemoteGenerationBackend(GenerationBackendSpec spec,
                                                 std::shared_ptr<http::Transport> transport)
    : spec_(std::move(spec)), transport_(std::move(transport)) {
  spec_.validate();
  if (!transport_) transport_ = http::make_default_transport();
}

std::string RemoteGenerationBackend::generate(const GenerationRequest& request) {
  nlohmann::json body = {
      {"model", spec_.model_name},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})},
      {"temperature", spec_.temperature}};
  const auto reply = http::post_json(*transport_, spec_.endpoint, body,
                                     http::auth_headers(spec_.api_key_env), spec_.retry);
  try {
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BackendUnavailable, std::string("malformed completion: ") + e.what());
  }
}

std::unique_ptr<GenerationBackend> make_generation_backend(
    const GenerationBackendSpec& spec, std::shared_ptr<http::Transport> transport) {
  if (spec.kind == BackendKind::Mock) return std::make_unique<MockGenerationBackend>(spec);
  return std::make_unique<RemoteGenerationBackend>(spec, std::move(transport));
}

std::string call(GenerationBackend& backend, const GenerationRequest& request) {
  const auto length = char_length(request.prompt);
  if (length > backend.spec().max_context_chars) {
    throw Error(ErrorCode::ContextOverflow,
                std::string(to_string(request.stage)) + " prompt of " + std::to_string(length) +
                    " chars exceeds max_context_chars " +
                    std::to_string(backend.spec().max_context_chars));
  }
  return backend.generate(request);
}

}  // namespace zerostylus::generation
