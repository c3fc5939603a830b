#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "zerostylus/generation.hpp"

namespace zerostylus::prompts {

/// Prompt skeletons keyed by (scope, stage). Scopes are the transfer variant
/// names plus "extract" and "judge". Skeletons use {{placeholder}} slots.
class PromptLibrary {
 public:
  /// Built-in skeletons.
  static PromptLibrary defaults();
  /// Built-ins overridden by `<dir>/<scope>.<stage>.txt` files. Unknown file
  /// keys and skeletons missing a required placeholder raise ConfigError.
  static PromptLibrary load(const std::filesystem::path& dir);

  const std::string& skeleton(std::string_view scope, generation::Stage stage) const;
  std::string render(std::string_view scope, generation::Stage stage,
                     const generation::Fields& fields) const;

  void set(std::string_view scope, generation::Stage stage, std::string skeleton);
  void validate() const;

  /// Key -> skeleton, for config echoes.
  const std::map<std::string, std::string>& entries() const noexcept { return skeletons_; }

 private:
  std::map<std::string, std::string> skeletons_;
};

/// Substitutes {{name}} slots; a slot without a field raises ConfigError.
std::string render_template(std::string_view skeleton, const generation::Fields& fields);

}  // namespace zerostylus::prompts
