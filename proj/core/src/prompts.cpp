#include "zerostylus/prompts.hpp"

#include <set>
#include <vector>

#include "zerostylus/error.hpp"
#include "zerostylus/util.hpp"

namespace zerostylus::prompts {

using generation::Stage;

namespace {

struct Builtin {
  const char* scope;
  Stage stage;
  std::vector<const char*> required;
  const char* text;
};

const std::vector<Builtin>& builtins() {
  static const std::vector<Builtin> table = {
      {"StructuredRewritten", Stage::Generate,
       {"source", "sentence_template", "paragraph_template", "alpha"},
       R"(Rewrite one sentence of an academic paragraph in the target author's style.

Sentence pattern to follow (lexical template):
{{sentence_template}}

Paragraph structure this sentence belongs to (template {{paragraph_structure}}):
{{paragraph_template}}

Sentences already rewritten in this window:
{{context}}

Style strength alpha = {{alpha}}. {{style_instruction}}

Keep every fact, number and claim of the original. Reply with the rewritten sentence only.

Original sentence:
{{source}})"},
      {"StructuredRewritten", Stage::Refine,
       {"drafts", "paragraph_template"},
       R"(Polish the rewritten sentences below into a coherent paragraph that follows the structure of the exemplar. Adjust transitions, discourse markers and references between sentences; do not add or drop content.

Exemplar paragraph (template {{paragraph_structure}}):
{{paragraph_template}}

Style strength alpha = {{alpha}}. {{style_instruction}}

Rewritten sentences, one per line:
{{drafts}}

Reply with the polished sentences, one per line, in the same order.)"},
      {"SentencePattern", Stage::Generate,
       {"source", "sentence_template", "alpha"},
       R"(Rewrite the sentence so that it follows the given sentence pattern of the target author.

Sentence pattern:
{{sentence_template}}

Sentences already rewritten in this window:
{{context}}

Style strength alpha = {{alpha}}. {{style_instruction}}

Keep the original meaning. Reply with the rewritten sentence only.

Original sentence:
{{source}})"},
      {"TemplateOnly", Stage::Generate,
       {"source", "references", "alpha"},
       R"(Rewrite the sentence in the style of the reference sentences.

Reference sentences:
{{references}}

Sentences already rewritten in this window:
{{context}}

Style strength alpha = {{alpha}}. {{style_instruction}}

Reply with the rewritten sentence only.

Original sentence:
{{source}})"},
      {"DirectPrompt", Stage::Direct,
       {"source", "references", "alpha"},
       R"(Rewrite the following text in the writing style of the reference text. Keep its content and paragraph breaks.

Style strength alpha = {{alpha}}. {{style_instruction}}

Reference text:
{{references}}

Text to rewrite:
{{source}})"},
      {"ConvTransfer", Stage::Destylize,
       {"window"},
       R"(Rewrite each line below in plain, neutral, style-free language, keeping its content. Reply with exactly one line per input line.

{{window}})"},
      {"ConvTransfer", Stage::Restylize,
       {"window", "references", "alpha"},
       R"(Rewrite each neutral line below in the style of the reference sentences. Reply with exactly one line per input line.

Reference sentences:
{{references}}

Style strength alpha = {{alpha}}. {{style_instruction}}

Neutral lines:
{{window}})"},
      {"extract", Stage::Abstract,
       {"template_text"},
       R"(Abstract the sentence below into a reusable pattern: keep function words, connectives and punctuation, and replace topic-specific content words with {SLOT}. Reply with the pattern only.

{{template_text}})"},
      {"judge", Stage::JudgeQuality,
       {"text"},
       R"(Rate the fluency and naturalness of the following text on a scale from 0 (poor) to 10 (excellent). Reply with a single number.

{{text}})"},
      {"judge", Stage::JudgePairwise,
       {"source", "reference", "first", "second", "axis"},
       R"(You compare two rewrites of a source paragraph against a style reference.
Criterion: {{axis}}

Source paragraph:
{{source}}

Style reference:
{{reference}}

Output 1:
{{first}}

Output 2:
{{second}}

Reply with a single number between -5 and 5: positive if Output 1 is better on the criterion, negative if Output 2 is better, 0 if equal.)"},
      {"judge", Stage::JudgeSimilarity,
       {"candidate", "reference"},
       R"(How closely does the candidate preserve the meaning of the reference? Reply with a single number between 0 (unrelated) and 1 (same meaning).

Reference:
{{reference}}

Candidate:
{{candidate}})"},
  };
  return table;
}

std::string key_of(std::string_view scope, Stage stage) {
  return std::string(scope) + "." + std::string(generation::to_string(stage));
}

const Builtin* find_builtin(const std::string& key) {
  for (const auto& b : builtins()) {
    if (key_of(b.scope, b.stage) == key) return &b;
  }
  return nullptr;
}

std::set<std::string> placeholders(std::string_view skeleton) {
  std::set<std::string> out;
  std::size_t pos = 0;
  while ((pos = skeleton.find("{{", pos)) != std::string_view::npos) {
    const auto end = skeleton.find("}}", pos + 2);
    if (end == std::string_view::npos) break;
    out.emplace(skeleton.substr(pos + 2, end - pos - 2));
    pos = end + 2;
  }
  return out;
}

}  // namespace

std::string render_template(std::string_view skeleton, const generation::Fields& fields) {
  std::string out;
  out.reserve(skeleton.size());
  std::size_t pos = 0;
  while (true) {
    const auto open = skeleton.find("{{", pos);
    if (open == std::string_view::npos) break;
    const auto close = skeleton.find("}}", open + 2);
    if (close == std::string_view::npos) break;
    out.append(skeleton.substr(pos, open - pos));
    const std::string name(skeleton.substr(open + 2, close - open - 2));
    auto it = fields.find(name);
    if (it == fields.end()) {
      throw Error(ErrorCode::ConfigError, "prompt placeholder {{" + name + "}} has no value");
    }
    out += it->second;
    pos = close + 2;
  }
  out.append(skeleton.substr(pos));
  return out;
}

PromptLibrary PromptLibrary::defaults() {
  PromptLibrary lib;
  for (const auto& b : builtins()) lib.skeletons_[key_of(b.scope, b.stage)] = b.text;
  return lib;
}

PromptLibrary PromptLibrary::load(const std::filesystem::path& dir) {
  PromptLibrary lib = defaults();
  if (!std::filesystem::is_directory(dir)) {
    throw Error(ErrorCode::ConfigError, "prompt directory " + dir.string() + " not found");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const std::string key = f.stem().string();
    if (!find_builtin(key)) {
      throw Error(ErrorCode::ConfigError, "unknown prompt file " + f.filename().string());
    }
    lib.skeletons_[key] = read_file(f);
  }
  lib.validate();
  return lib;
}

const std::string& PromptLibrary::skeleton(std::string_view scope, Stage stage) const {
  auto it = skeletons_.find(key_of(scope, stage));
  if (it == skeletons_.end()) {
    throw Error(ErrorCode::ConfigError, "no prompt skeleton for " + key_of(scope, stage));
  }
  return it->second;
}

std::string PromptLibrary::render(std::string_view scope, Stage stage,
                                  const generation::Fields& fields) const {
  return render_template(skeleton(scope, stage), fields);
}

void PromptLibrary::set(std::string_view scope, Stage stage, std::string skeleton) {
  const auto key = key_of(scope, stage);
  if (!find_builtin(key)) throw Error(ErrorCode::ConfigError, "unknown prompt key " + key);
  skeletons_[key] = std::move(skeleton);
}

void PromptLibrary::validate() const {
  for (const auto& [key, text] : skeletons_) {
    const Builtin* b = find_builtin(key);
    if (!b) throw Error(ErrorCode::ConfigError, "unknown prompt key " + key);
    const auto present = placeholders(text);
    for (const char* req : b->required) {
      if (!present.count(req)) {
        throw Error(ErrorCode::ConfigError,
                    "prompt " + key + " lacks required placeholder {{" + req + "}}");
      }
    }
  }
}

}  // namespace zerostylus::prompts
