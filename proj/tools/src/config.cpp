#include "zerostylus_cli/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "zerostylus/error.hpp"
#include "zerostylus/util.hpp"

namespace zerostylus::cli {

namespace {

using Inputs = std::vector<std::string>;

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw Error(ErrorCode::ConfigError, key + ": " + why);
}

const std::string& single(const std::string& key, const Inputs& in) {
  if (in.size() != 1) bad(key, "expected a single value");
  return in.front();
}

double to_double(const std::string& key, const Inputs& in) {
  const auto& s = single(key, in);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v)) {
    bad(key, "'" + s + "' is not a finite number");
  }
  return v;
}

long long to_int(const std::string& key, const Inputs& in) {
  const auto& s = single(key, in);
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
    bad(key, "'" + s + "' is not an integer");
  }
  return v;
}

std::size_t to_size(const std::string& key, const Inputs& in) {
  const long long v = to_int(key, in);
  if (v < 0) bad(key, "must be non-negative");
  return static_cast<std::size_t>(v);
}

std::uint64_t to_u64(const std::string& key, const Inputs& in) {
  const auto& s = single(key, in);
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (s.empty() || s[0] == '-' || end != s.c_str() + s.size() || errno == ERANGE) {
    bad(key, "'" + s + "' is not an unsigned integer");
  }
  return v;
}

bool to_bool(const std::string& key, const Inputs& in) {
  const auto& s = single(key, in);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  bad(key, "'" + s + "' is not a boolean");
}

std::optional<double> to_opt_double(const std::string& key, const Inputs& in) {
  if (in.empty() || (in.size() == 1 && (in[0].empty() || in[0] == "null"))) return std::nullopt;
  return to_double(key, in);
}

template <typename Kind>
Kind to_kind(const std::string& key, const Inputs& in) {
  const auto& s = single(key, in);
  if (s == "mock") return Kind::Mock;
  if (s == "remote") return Kind::Remote;
  bad(key, "kind must be 'mock' or 'remote'");
}

template <typename Kind>
std::string kind_name(Kind k) {
  return k == Kind::Mock ? "mock" : "remote";
}

bool set_generation_key(generation::GenerationBackendSpec& g, const std::string& name,
                        const std::string& key, const Inputs& in) {
  if (name == "backend_id") g.backend_id = single(key, in);
  else if (name == "kind") g.kind = to_kind<generation::BackendKind>(key, in);
  else if (name == "endpoint") g.endpoint = single(key, in);
  else if (name == "model_name") g.model_name = single(key, in);
  else if (name == "max_context_chars") g.max_context_chars = to_size(key, in);
  else if (name == "temperature") g.temperature = to_double(key, in);
  else if (name == "api_key_env") g.api_key_env = single(key, in);
  else if (name == "retry_attempts") g.retry.max_attempts = static_cast<int>(to_int(key, in));
  else if (name == "retry_backoff_ms") g.retry.initial_backoff = std::chrono::milliseconds(to_int(key, in));
  else return false;
  return true;
}

nlohmann::json generation_json(const generation::GenerationBackendSpec& g) {
  return {{"backend_id", g.backend_id},
          {"kind", kind_name(g.kind)},
          {"endpoint", g.endpoint},
          {"model_name", g.model_name},
          {"max_context_chars", g.max_context_chars},
          {"temperature", g.temperature},
          {"api_key_env", g.api_key_env},
          {"retry_attempts", g.retry.max_attempts},
          {"retry_backoff_ms", g.retry.initial_backoff.count()}};
}

using Setter = std::function<void(PipelineConfig&, const std::string&, const Inputs&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    // embedding
    t["embedding.backend_id"] = [](auto& c, auto& k, auto& in) { c.embedding.backend_id = single(k, in); };
    t["embedding.kind"] = [](auto& c, auto& k, auto& in) { c.embedding.kind = to_kind<embedding::BackendKind>(k, in); };
    t["embedding.endpoint"] = [](auto& c, auto& k, auto& in) { c.embedding.endpoint = single(k, in); };
    t["embedding.model_name"] = [](auto& c, auto& k, auto& in) { c.embedding.model_name = single(k, in); };
    t["embedding.dim"] = [](auto& c, auto& k, auto& in) { c.embedding.dim = to_size(k, in); };
    t["embedding.max_batch"] = [](auto& c, auto& k, auto& in) { c.embedding.max_batch = to_size(k, in); };
    t["embedding.api_key_env"] = [](auto& c, auto& k, auto& in) { c.embedding.api_key_env = single(k, in); };
    t["embedding.hash_seed"] = [](auto& c, auto& k, auto& in) { c.embedding.hash_seed = to_u64(k, in); };
    t["embedding.max_in_flight"] = [](auto& c, auto& k, auto& in) { c.embedding.max_in_flight = to_size(k, in); };
    t["embedding.max_job_texts"] = [](auto& c, auto& k, auto& in) { c.embedding.max_job_texts = to_size(k, in); };
    t["embedding.retry_attempts"] = [](auto& c, auto& k, auto& in) {
      c.embedding.retry.max_attempts = static_cast<int>(to_int(k, in));
    };
    t["embedding.retry_backoff_ms"] = [](auto& c, auto& k, auto& in) {
      c.embedding.retry.initial_backoff = std::chrono::milliseconds(to_int(k, in));
    };
    // generation
    for (const char* name : {"backend_id", "kind", "endpoint", "model_name", "max_context_chars",
                             "temperature", "api_key_env", "retry_attempts", "retry_backoff_ms"}) {
      t[std::string("generation.") + name] = [name](auto& c, auto& k, auto& in) {
        set_generation_key(c.generation, name, k, in);
      };
    }
    // templates
    t["templates.eps"] = [](auto& c, auto& k, auto& in) { c.clustering.eps = to_opt_double(k, in); };
    t["templates.min_pts"] = [](auto& c, auto& k, auto& in) { c.clustering.min_pts = to_size(k, in); };
    t["templates.epsilon"] = [](auto& c, auto& k, auto& in) { c.epsilon = to_opt_double(k, in); };
    // transfer
    t["transfer.alpha"] = [](auto& c, auto& k, auto& in) { c.transfer.alpha = to_double(k, in); };
    t["transfer.window_sentences"] = [](auto& c, auto& k, auto& in) { c.transfer.window_sentences = to_size(k, in); };
    t["transfer.variant"] = [](auto& c, auto& k, auto& in) { c.transfer.variant = transfer::parse_variant(single(k, in)); };
    t["transfer.reference_k"] = [](auto& c, auto& k, auto& in) { c.transfer.reference_k = to_size(k, in); };
    t["transfer.low_confidence_margin"] = [](auto& c, auto& k, auto& in) {
      c.transfer.low_confidence_margin = to_double(k, in);
    };
    t["transfer.max_parallel_paragraphs"] = [](auto& c, auto& k, auto& in) {
      c.transfer.max_parallel_paragraphs = to_size(k, in);
    };
    t["transfer.trace_timing"] = [](auto& c, auto& k, auto& in) { c.transfer.trace_timing = to_bool(k, in); };
    // evaluation
    t["evaluation.delta"] = [](auto& c, auto& k, auto& in) { c.evaluation.delta = to_double(k, in); };
    t["evaluation.semantic_weight"] = [](auto& c, auto& k, auto& in) { c.evaluation.semantic_weight = to_double(k, in); };
    t["evaluation.keyword_count"] = [](auto& c, auto& k, auto& in) { c.evaluation.keyword_count = to_size(k, in); };
    t["evaluation.judging"] = [](auto& c, auto& k, auto& in) {
      const auto& v = single(k, in);
      if (v == "per-axis") c.evaluation.judging = evaluation::JudgingMode::PerAxis;
      else if (v == "single") c.evaluation.judging = evaluation::JudgingMode::Single;
      else bad(k, "judging must be 'per-axis' or 'single'");
    };
    t["evaluation.semantic_scorer"] = [](auto& c, auto& k, auto& in) {
      const auto& v = single(k, in);
      if (v != "token-f1" && v != "judge") bad(k, "semantic_scorer must be 'token-f1' or 'judge'");
      c.evaluation.semantic_scorer = v;
    };
    t["evaluation.quality_judge"] = [](auto& c, auto& k, auto& in) { c.evaluation.quality_judge = single(k, in); };
    t["evaluation.max_in_flight"] = [](auto& c, auto& k, auto& in) { c.evaluation.max_in_flight = to_size(k, in); };
    t["evaluation.csv"] = [](auto& c, auto& k, auto& in) { c.evaluation.csv = to_bool(k, in); };
    // sampling
    t["sampling.n_exp"] = [](auto& c, auto& k, auto& in) { c.sampling.n_exp = static_cast<int>(to_int(k, in)); };
    t["sampling.sigma"] = [](auto& c, auto& k, auto& in) { c.sampling.sigma = to_double(k, in); };
    t["sampling.seed"] = [](auto& c, auto& k, auto& in) { c.sampling.seed = to_u64(k, in); };
    // paths
    t["paths.corpus"] = [](auto& c, auto& k, auto& in) { c.paths.corpus = single(k, in); };
    t["paths.source"] = [](auto& c, auto& k, auto& in) { c.paths.source = single(k, in); };
    t["paths.repos"] = [](auto& c, auto& k, auto& in) { c.paths.repos = single(k, in); };
    t["paths.references"] = [](auto& c, auto& k, auto& in) { c.paths.references = single(k, in); };
    t["paths.output"] = [](auto& c, auto& k, auto& in) { c.paths.output = single(k, in); };
    t["paths.prompts"] = [](auto& c, auto& k, auto& in) { c.paths.prompts = single(k, in); };
    // segmentation
    t["segmentation.abbreviations"] = [](auto& c, auto&, auto& in) { c.abbreviations = in; };
    return t;
  }();
  return table;
}

JudgeConfig& judge_named(PipelineConfig& cfg, const std::string& name) {
  if (cfg.default_judges) {
    cfg.judges.clear();
    cfg.default_judges = false;
  }
  for (auto& j : cfg.judges) {
    if (j.name == name) return j;
  }
  JudgeConfig j;
  j.name = name;
  j.spec.backend_id = name;
  cfg.judges.push_back(std::move(j));
  return cfg.judges.back();
}

std::string json_scalar(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_float()) return format_number(v.get<double>());
  return v.dump();
}

void apply_json(PipelineConfig& cfg, const nlohmann::json& root) {
  const auto& j = root.contains("config") && root.at("config").is_object() ? root.at("config") : root;
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "config JSON must be an object");
  for (const auto& [section, body] : j.items()) {
    if (!body.is_object()) throw Error(ErrorCode::ConfigError, "section '" + section + "' must be a table");
    if (section == "judges") {
      for (const auto& [name, keys] : body.items()) {
        judge_named(cfg, name);
        for (const auto& [key, value] : keys.items()) {
          apply_setting(cfg, "judges." + name + "." + key, {json_scalar(value)});
        }
      }
      continue;
    }
    for (const auto& [key, value] : body.items()) {
      Inputs in;
      if (value.is_array()) {
        for (const auto& e : value) in.push_back(json_scalar(e));
      } else if (!value.is_null()) {
        in.push_back(json_scalar(value));
      }
      apply_setting(cfg, section + "." + key, in);
    }
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.emplace_back(trim(cur));
  return out;
}

}  // namespace

PipelineConfig default_config() {
  PipelineConfig cfg;
  JudgeConfig judge;
  judge.name = "mock-judge";
  judge.spec.backend_id = "mock-judge";
  cfg.judges.push_back(std::move(judge));
  return cfg;
}

void PipelineConfig::validate() const {
  embedding.validate();
  generation.validate();
  if (judges.empty()) throw Error(ErrorCode::ConfigError, "no judges configured");
  for (const auto& j : judges) j.spec.validate();
  transfer.validate();
  if (!(evaluation.delta >= 0.0 && evaluation.delta < 0.5)) {
    throw Error(ErrorCode::ConfigError, "evaluation.delta must lie in [0, 0.5)");
  }
  if (!(evaluation.semantic_weight >= 0.0 && evaluation.semantic_weight <= 1.0)) {
    throw Error(ErrorCode::ConfigError, "evaluation.semantic_weight must lie in [0, 1]");
  }
  if (evaluation.keyword_count < 1) throw Error(ErrorCode::ConfigError, "evaluation.keyword_count must be >= 1");
  if (evaluation.max_in_flight < 1) throw Error(ErrorCode::ConfigError, "evaluation.max_in_flight must be >= 1");
  if (sampling.n_exp < 1 || sampling.n_exp > 5) {
    throw Error(ErrorCode::ConfigError, "sampling.n_exp must lie in [1, 5]");
  }
  if (!(sampling.sigma > 0.0)) throw Error(ErrorCode::ConfigError, "sampling.sigma must be > 0");
  if (clustering.eps && !(*clustering.eps > 0.0)) throw Error(ErrorCode::ConfigError, "templates.eps must be > 0");
  if (clustering.min_pts < 1) throw Error(ErrorCode::ConfigError, "templates.min_pts must be >= 1");
  if (epsilon && !(*epsilon > 0.0)) throw Error(ErrorCode::ConfigError, "templates.epsilon must be > 0");
  quality_judge();
}

corpus::SegmentationRules PipelineConfig::segmentation_rules() const {
  corpus::SegmentationRules rules;
  rules.abbreviations = abbreviations;
  return rules;
}

const JudgeConfig& PipelineConfig::quality_judge() const {
  if (judges.empty()) throw Error(ErrorCode::ConfigError, "no judges configured");
  if (evaluation.quality_judge.empty()) return judges.front();
  for (const auto& j : judges) {
    if (j.name == evaluation.quality_judge) return j;
  }
  throw Error(ErrorCode::ConfigError, "evaluation.quality_judge '" + evaluation.quality_judge +
                                          "' is not a configured judge");
}

void apply_setting(PipelineConfig& cfg, const std::string& key, const Inputs& inputs) {
  if (key.rfind("judges.", 0) == 0) {
    const auto rest = key.substr(7);
    const auto dot = rest.rfind('.');
    if (dot == std::string::npos || dot == 0) bad(key, "expected judges.<name>.<key>");
    auto& judge = judge_named(cfg, rest.substr(0, dot));
    if (!set_generation_key(judge.spec, rest.substr(dot + 1), key, inputs)) bad(key, "unknown key");
    return;
  }
  auto it = setters().find(key);
  if (it == setters().end()) bad(key, "unknown key");
  it->second(cfg, key, inputs);
}

void apply_assignment(PipelineConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw Error(ErrorCode::ConfigError, "expected section.key=value, got '" + assignment + "'");
  }
  const std::string key(trim(std::string_view(assignment).substr(0, eq)));
  const std::string value(trim(std::string_view(assignment).substr(eq + 1)));
  if (key == "segmentation.abbreviations") {
    apply_setting(cfg, key, value.empty() ? Inputs{} : split(value, ','));
  } else {
    apply_setting(cfg, key, {value});
  }
}

void apply_config_text(PipelineConfig& cfg, const std::string& text) {
  const auto body = trim(text);
  if (!body.empty() && body.front() == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ConfigError, std::string("config JSON: ") + e.what());
    }
    apply_json(cfg, j);
    return;
  }

  std::istringstream in(text);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_config(in);
  } catch (const CLI::Error& e) {
    throw Error(ErrorCode::ConfigError, std::string("config file: ") + e.what());
  }
  for (const auto& item : items) {
    if (item.name == "--") continue;
    if (item.name == "++") {
      // An empty [judges.<name>] table still declares a judge.
      if (item.parents.size() == 2 && item.parents[0] == "judges") judge_named(cfg, item.parents[1]);
      continue;
    }
    if (item.parents.empty()) bad(item.name, "keys must live in a [section]");
    apply_setting(cfg, item.fullname(), item.inputs);
  }
}

void apply_config_file(PipelineConfig& cfg, const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, std::string("cannot read config: ") + e.what());
  }
  apply_config_text(cfg, text);
}

nlohmann::json to_json(const PipelineConfig& cfg) {
  nlohmann::json judges = nlohmann::json::object();
  for (const auto& j : cfg.judges) judges[j.name] = generation_json(j.spec);
  const auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  const auto& e = cfg.embedding;
  return {
      {"embedding",
       {{"backend_id", e.backend_id},
        {"kind", kind_name(e.kind)},
        {"endpoint", e.endpoint},
        {"model_name", e.model_name},
        {"dim", e.dim},
        {"max_batch", e.max_batch},
        {"api_key_env", e.api_key_env},
        {"hash_seed", e.hash_seed},
        {"max_in_flight", e.max_in_flight},
        {"max_job_texts", e.max_job_texts},
        {"retry_attempts", e.retry.max_attempts},
        {"retry_backoff_ms", e.retry.initial_backoff.count()}}},
      {"generation", generation_json(cfg.generation)},
      {"judges", judges},
      {"templates",
       {{"eps", opt(cfg.clustering.eps)},
        {"min_pts", cfg.clustering.min_pts},
        {"epsilon", opt(cfg.epsilon)}}},
      {"transfer",
       {{"alpha", cfg.transfer.alpha},
        {"window_sentences", cfg.transfer.window_sentences},
        {"variant", transfer::to_string(cfg.transfer.variant)},
        {"reference_k", cfg.transfer.reference_k},
        {"low_confidence_margin", cfg.transfer.low_confidence_margin},
        {"max_parallel_paragraphs", cfg.transfer.max_parallel_paragraphs},
        {"trace_timing", cfg.transfer.trace_timing}}},
      {"evaluation",
       {{"delta", cfg.evaluation.delta},
        {"semantic_weight", cfg.evaluation.semantic_weight},
        {"keyword_count", cfg.evaluation.keyword_count},
        {"judging", cfg.evaluation.judging == evaluation::JudgingMode::PerAxis ? "per-axis" : "single"},
        {"semantic_scorer", cfg.evaluation.semantic_scorer},
        {"quality_judge", cfg.evaluation.quality_judge},
        {"max_in_flight", cfg.evaluation.max_in_flight},
        {"csv", cfg.evaluation.csv}}},
      {"sampling",
       {{"n_exp", cfg.sampling.n_exp}, {"sigma", cfg.sampling.sigma}, {"seed", cfg.sampling.seed}}},
      {"paths",
       {{"corpus", cfg.paths.corpus},
        {"source", cfg.paths.source},
        {"repos", cfg.paths.repos},
        {"references", cfg.paths.references},
        {"output", cfg.paths.output},
        {"prompts", cfg.paths.prompts}}},
      {"segmentation", {{"abbreviations", cfg.abbreviations}}},
  };
}

}  // namespace zerostylus::cli
