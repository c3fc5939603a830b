#include "zerostylus/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <future>
#include <map>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "zerostylus/error.hpp"
#include "zerostylus/util.hpp"

namespace zerostylus::evaluation {

using generation::Stage;

namespace {

constexpr std::string_view kStopwords[] = {
    "a",     "about", "after",  "again", "all",   "also",  "am",    "an",    "and",   "any",
    "are",   "as",    "at",     "be",    "been",  "before", "being", "but",   "by",    "can",
    "could", "did",   "do",     "does",  "for",   "from",  "had",   "has",   "have",  "he",
    "her",   "here",  "him",    "his",   "how",   "i",     "if",    "in",    "into",  "is",
    "it",    "its",   "just",   "me",    "more",  "most",  "my",    "no",    "not",   "of",
    "on",    "only",  "or",     "other", "our",   "out",   "over",  "s",     "she",   "so",
    "some",  "such",  "than",   "that",  "the",   "their", "them",  "then",  "there", "these",
    "they",  "this",  "those",  "through", "to",  "too",   "under", "up",    "very",  "was",
    "we",    "were",  "what",   "when",  "where", "which", "while", "who",   "why",   "will",
    "with",  "would", "you",    "your"};
static_assert(std::ranges::is_sorted(kStopwords), "is_stopword binary-searches this list");

struct AxisSpec {
  std::string key;
  std::string criterion;
};

const std::vector<AxisSpec>& axis_specs(JudgingMode mode) {
  static const std::vector<AxisSpec> per_axis = {
      {"X", "style consistency: how closely the output matches the style of the reference"},
      {"Y", "content preservation: how faithfully the output keeps the meaning of the source"},
      {"Z", "expression quality: fluency and naturalness of the output"}};
  static const std::vector<AxisSpec> single = {
      {"overall", "overall quality as a style transfer of the source toward the reference"}};
  return mode == JudgingMode::PerAxis ? per_axis : single;
}

double judge_margin(generation::GenerationBackend& judge, const prompts::PromptLibrary& prompts,
                    const AdversarialSample& s, const AxisSpec& axis, bool a_first) {
  generation::Fields f = {{"source", s.source},
                          {"reference", s.reference},
                          {"first", a_first ? s.output_a : s.output_b},
                          {"second", a_first ? s.output_b : s.output_a},
                          {"axis", axis.criterion}};
  generation::GenerationRequest req{Stage::JudgePairwise,
                                    prompts.render("judge", Stage::JudgePairwise, f), f};
  const double m = parse_judge_number(generation::call(judge, req));
  if (m < -5.0 || m > 5.0) {
    throw Error(ErrorCode::RangeError, "judge margin " + format_number(m) + " outside [-5, 5]");
  }
  return m;
}

// Records for one sample, or nullopt when any reply failed.
std::optional<std::vector<PairwiseRecord>> judge_sample(generation::GenerationBackend& judge,
                                                        const std::string& judge_name,
                                                        const prompts::PromptLibrary& prompts,
                                                        const AdversarialSample& s,
                                                        JudgingMode mode) {
  std::vector<PairwiseRecord> out;
  try {
    for (const auto& axis : axis_specs(mode)) {
      PairwiseRecord r;
      r.sample_id = s.sample_id;
      r.axis = axis.key;
      r.s_ab = judge_margin(judge, prompts, s, axis, true);
      r.s_ba = judge_margin(judge, prompts, s, axis, false);
      r.pref_a = pairwise_preference(r.s_ab, r.s_ba);
      out.push_back(std::move(r));
    }
  } catch (const Error& e) {
    spdlog::warn("judge {} excluded sample {}: {}", judge_name, s.sample_id, e.what());
    return std::nullopt;
  }
  return out;
}

nlohmann::json score_json(const TriAxialScore& s) {
  return {{"x", s.x}, {"y", s.y}, {"z", s.z}};
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

double average_score(const TriAxialScore& v) noexcept { return (v.x + v.y + v.z) / 3.0; }

// -- style consistency ------------------------------------------------------

double score_style_consistency(const Embedding& output, std::span<const Embedding> references) {
  if (references.empty()) throw Error(ErrorCode::EmptyList, "no reference paragraphs");
  double best = -1.0;
  for (const auto& r : references) best = std::max(best, embedding::cosine_similarity(output, r));
  return best;
}

double score_style_consistency(std::string_view output_para,
                               std::span<const std::string> reference_paras,
                               embedding::EmbeddingBackend& backend) {
  if (reference_paras.empty()) throw Error(ErrorCode::EmptyList, "no reference paragraphs");
  std::vector<std::string> texts{std::string(output_para)};
  texts.insert(texts.end(), reference_paras.begin(), reference_paras.end());
  const auto embs = embedding::embed_sentences(backend, texts);
  return score_style_consistency(embs.front(), std::span(embs).subspan(1));
}

// -- content preservation ---------------------------------------------------

SemanticScorer token_f1_scorer() {
  return [](std::string_view candidate, std::string_view reference) {
    return token_f1(candidate, reference);
  };
}

SemanticScorer judge_similarity_scorer(generation::GenerationBackend& judge,
                                       const prompts::PromptLibrary& prompts) {
  return [&judge, &prompts](std::string_view candidate, std::string_view reference) {
    generation::Fields f = {{"candidate", std::string(candidate)},
                            {"reference", std::string(reference)}};
    generation::GenerationRequest req{Stage::JudgeSimilarity,
                                      prompts.render("judge", Stage::JudgeSimilarity, f), f};
    const double v = parse_judge_number(generation::call(judge, req));
    if (v < 0.0 || v > 1.0) {
      throw Error(ErrorCode::RangeError, "similarity " + format_number(v) + " outside [0, 1]");
    }
    return v;
  };
}

bool is_stopword(std::string_view token) noexcept {
  return std::binary_search(std::begin(kStopwords), std::end(kStopwords), token);
}

std::vector<std::string> top_keywords(std::string_view text, std::size_t k) {
  std::map<std::string, std::size_t> tf;
  for (auto& t : word_tokens(text)) {
    if (!is_stopword(t)) ++tf[t];
  }
  std::vector<std::pair<std::string, std::size_t>> items(tf.begin(), tf.end());
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < items.size() && i < k; ++i) out.push_back(items[i].first);
  return out;
}

Keyworder frequency_keyworder(std::size_t k) {
  return [k](std::string_view text) { return top_keywords(text, k); };
}

ContentScore score_content_preservation(std::string_view output_para,
                                        std::string_view source_para,
                                        const SemanticScorer& scorer, const Keyworder& keyworder,
                                        double semantic_weight) {
  if (!(semantic_weight >= 0.0 && semantic_weight <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "semantic weight must lie in [0, 1]");
  }
  ContentScore out;
  const auto keywords = keyworder(source_para);
  out.source_keywords = keywords.size();
  if (keywords.empty()) {
    out.keyword_recall = 1.0;
    out.flags.emplace_back("no-source-keywords");
  } else {
    const auto tokens = word_tokens(output_para);
    const std::set<std::string> present(tokens.begin(), tokens.end());
    for (const auto& kw : keywords) out.kept_keywords += present.count(kw);
    out.keyword_recall =
        static_cast<double>(out.kept_keywords) / static_cast<double>(keywords.size());
  }

  try {
    out.semantic = scorer(output_para, source_para);
  } catch (const Error& e) {
    spdlog::warn("semantic scorer failed, using keyword recall only: {}", e.what());
    out.flags.emplace_back("semantic-scorer-failed");
  }
  out.value = out.semantic ? semantic_weight * *out.semantic +
                                 (1.0 - semantic_weight) * out.keyword_recall
                           : out.keyword_recall;
  return out;
}

// -- expression quality -----------------------------------------------------

double parse_judge_number(std::string_view reply) {
  const std::string s(reply);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    const bool starts = std::isdigit(static_cast<unsigned char>(c)) ||
                        ((c == '-' || c == '+' || c == '.') && i + 1 < s.size() &&
                         (std::isdigit(static_cast<unsigned char>(s[i + 1])) || s[i + 1] == '.'));
    if (!starts) continue;
    char* end = nullptr;
    const double v = std::strtod(s.c_str() + i, &end);
    if (end == s.c_str() + i) continue;
    if (!std::isfinite(v)) break;
    return v;
  }
  throw Error(ErrorCode::RangeError, "no number in judge reply '" + s.substr(0, 80) + "'");
}

QualityScore score_expression_quality(std::string_view output_para,
                                      generation::GenerationBackend& judge,
                                      const prompts::PromptLibrary& prompts) {
  QualityScore out;
  if (trim(output_para).empty()) {
    out.flags.emplace_back("empty-output");
    return out;
  }
  generation::Fields f = {{"text", std::string(output_para)}, {"axis", "quality"}};
  generation::GenerationRequest req{Stage::JudgeQuality,
                                    prompts.render("judge", Stage::JudgeQuality, f), f};
  const double v = parse_judge_number(generation::call(judge, req));
  if (v < 0.0 || v > 10.0) {
    throw Error(ErrorCode::RangeError, "quality rating " + format_number(v) + " outside [0, 10]");
  }
  out.value = v;
  return out;
}

// -- fusion -----------------------------------------------------------------

std::array<AxisBounds, 3> cohort_bounds(std::span<const TriAxialScore> raw) {
  if (raw.empty()) throw Error(ErrorCode::EmptyCohort, "nothing to normalize");
  std::array<AxisBounds, 3> b;
  const auto axis = [](const TriAxialScore& s, int a) { return a == 0 ? s.x : a == 1 ? s.y : s.z; };
  for (int a = 0; a < 3; ++a) {
    b[a] = {axis(raw[0], a), axis(raw[0], a)};
    for (const auto& s : raw) {
      const double v = axis(s, a);
      if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "non-finite raw score");
      b[a].min = std::min(b[a].min, v);
      b[a].max = std::max(b[a].max, v);
    }
  }
  return b;
}

std::vector<TriAxialScore> normalize_and_fuse(std::span<const TriAxialScore> raw) {
  const auto bounds = cohort_bounds(raw);
  const auto scale = [](double v, const AxisBounds& b) {
    if (b.max == b.min) return 5.0;
    return std::clamp(10.0 * ((v - b.min) / (b.max - b.min)), 0.0, 10.0);
  };
  std::vector<TriAxialScore> out;
  out.reserve(raw.size());
  for (const auto& s : raw) {
    TriAxialScore n = s;
    n.x = scale(s.x, bounds[0]);
    n.y = scale(s.y, bounds[1]);
    n.z = scale(s.z, bounds[2]);
    out.push_back(std::move(n));
  }
  return out;
}

// -- pairwise protocol ------------------------------------------------------

double sigmoid(double v) noexcept {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double pairwise_preference(double s_ab, double s_ba) {
  if (!std::isfinite(s_ab) || !std::isfinite(s_ba)) {
    throw Error(ErrorCode::InvalidArgument, "judge scores must be finite");
  }
  return 0.5 * (1.0 + (sigmoid(s_ab) - sigmoid(s_ba)));
}

double WinRate::win_rate() const noexcept {
  return total() ? static_cast<double>(wins) / static_cast<double>(total()) : 0.0;
}
double WinRate::loss_rate() const noexcept {
  return total() ? static_cast<double>(losses) / static_cast<double>(total()) : 0.0;
}
double WinRate::tie_rate() const noexcept {
  return total() ? static_cast<double>(ties) / static_cast<double>(total()) : 0.0;
}

WinRate win_rate(std::span<const double> prefs, double delta) {
  if (prefs.empty()) throw Error(ErrorCode::EmptyList, "no preferences to tally");
  if (!(delta >= 0.0 && delta < 0.5)) {
    throw Error(ErrorCode::InvalidArgument, "delta must lie in [0, 0.5)");
  }
  WinRate r;
  for (double p : prefs) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "preference outside [0, 1]");
    }
    if (p - 0.5 > delta) {
      ++r.wins;
    } else if (0.5 - p > delta) {
      ++r.losses;
    } else {
      ++r.ties;
    }
  }
  return r;
}

void AdversarialConfig::validate() const {
  if (!(delta >= 0.0 && delta < 0.5)) throw Error(ErrorCode::ConfigError, "delta must lie in [0, 0.5)");
  if (max_in_flight < 1) throw Error(ErrorCode::ConfigError, "max_in_flight must be >= 1");
}

std::vector<std::string> judged_axes(JudgingMode mode) {
  std::vector<std::string> out;
  for (const auto& a : axis_specs(mode)) out.push_back(a.key);
  return out;
}

AdversarialReport adversarial_run(std::span<const AdversarialSample> samples,
                                  std::span<const Judge> judges,
                                  const prompts::PromptLibrary& prompts,
                                  const AdversarialConfig& cfg) {
  cfg.validate();
  if (judges.empty()) throw Error(ErrorCode::ConfigError, "no judges configured");
  if (samples.empty()) throw Error(ErrorCode::EmptyList, "no samples to judge");
  for (const auto& j : judges) {
    if (!j.backend) throw Error(ErrorCode::ConfigError, "judge '" + j.name + "' has no backend");
  }

  AdversarialReport report;
  report.config = cfg;
  report.sample_count = samples.size();
  for (const auto& judge : judges) {
    JudgeReport jr;
    jr.judge = judge.name;
    jr.model_name = judge.backend->spec().model_name;

    std::vector<std::optional<std::vector<PairwiseRecord>>> per_sample(samples.size());
    for (std::size_t i = 0; i < samples.size(); i += cfg.max_in_flight) {
      const std::size_t end = std::min(samples.size(), i + cfg.max_in_flight);
      if (end - i == 1) {
        per_sample[i] = judge_sample(*judge.backend, judge.name, prompts, samples[i], cfg.mode);
        continue;
      }
      std::vector<std::future<std::optional<std::vector<PairwiseRecord>>>> batch;
      for (std::size_t k = i; k < end; ++k) {
        batch.push_back(std::async(std::launch::async, [&, k] {
          return judge_sample(*judge.backend, judge.name, prompts, samples[k], cfg.mode);
        }));
      }
      for (std::size_t k = i; k < end; ++k) per_sample[k] = batch[k - i].get();
    }

    std::map<std::string, std::vector<double>> prefs;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (!per_sample[i]) {
        jr.excluded.push_back(samples[i].sample_id);
        continue;
      }
      for (auto& r : *per_sample[i]) {
        prefs[r.axis].push_back(r.pref_a);
        jr.records.push_back(std::move(r));
      }
    }
    for (const auto& axis : judged_axes(cfg.mode)) {
      const auto& p = prefs[axis];
      jr.axes.push_back({axis, p.empty() ? WinRate{} : win_rate(p, cfg.delta)});
    }
    report.judges.push_back(std::move(jr));
  }
  return report;
}

// -- tri-axial run ----------------------------------------------------------

void TriAxialConfig::validate() const {
  if (!(semantic_weight >= 0.0 && semantic_weight <= 1.0)) {
    throw Error(ErrorCode::ConfigError, "content semantic_weight must lie in [0, 1]");
  }
  if (keyword_count < 1) throw Error(ErrorCode::ConfigError, "keyword_count must be >= 1");
}

TriAxialReport triaxial_evaluate(std::span<const TriAxialSample> samples, const Scorers& scorers,
                                 const TriAxialConfig& cfg) {
  cfg.validate();
  if (samples.empty()) throw Error(ErrorCode::EmptyCohort, "no samples to evaluate");
  if (!scorers.embedder || !scorers.quality_judge || !scorers.prompts || !scorers.semantic) {
    throw Error(ErrorCode::ConfigError, "tri-axial evaluation needs all three scorers");
  }

  // Embed each distinct text once.
  std::map<std::string, std::size_t> index;
  std::vector<std::string> texts;
  auto add = [&](const std::string& t) {
    if (index.emplace(t, texts.size()).second) texts.push_back(t);
  };
  for (const auto& s : samples) {
    if (s.references.empty()) {
      throw Error(ErrorCode::EmptyList, "sample " + s.sample_id + " has no reference paragraphs");
    }
    add(s.output);
    for (const auto& r : s.references) add(r);
  }
  std::vector<std::string> embeddable;
  for (const auto& t : texts) embeddable.push_back(trim(t).empty() ? std::string(" ") : t);
  const auto embs = embedding::embed_sentences(*scorers.embedder, embeddable);

  const auto keyworder = frequency_keyworder(cfg.keyword_count);
  const std::string x_src = "embedding:" + scorers.embedder->spec().backend_id;
  const std::string y_src = scorers.semantic_name + "+keywords";
  const std::string z_src = "judge:" + scorers.quality_judge->spec().backend_id;

  TriAxialReport report;
  report.config = cfg;
  std::vector<TriAxialScore> raw;
  for (const auto& s : samples) {
    SampleRow row;
    row.sample_id = s.sample_id;
    row.method = s.method;
    row.raw.x_source = x_src;
    row.raw.y_source = y_src;
    row.raw.z_source = z_src;

    std::vector<Embedding> refs;
    for (const auto& r : s.references) refs.push_back(embs[index.at(r)]);
    row.raw.x = score_style_consistency(embs[index.at(s.output)], refs);

    auto content = score_content_preservation(s.output, s.source, scorers.semantic, keyworder,
                                              cfg.semantic_weight);
    row.raw.y = content.value;
    for (auto& f : content.flags) row.flags.push_back(std::move(f));

    try {
      auto q = score_expression_quality(s.output, *scorers.quality_judge, *scorers.prompts);
      row.raw.z = q.value;
      for (auto& f : q.flags) row.flags.push_back(std::move(f));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::RangeError) throw;
      spdlog::warn("quality judge rejected for {}: {}", s.sample_id, e.what());
      row.raw.z = 0.0;
      row.flags.emplace_back("quality-out-of-range");
    }
    raw.push_back(row.raw);
    report.rows.push_back(std::move(row));
  }

  report.bounds = cohort_bounds(raw);
  const auto norm = normalize_and_fuse(raw);
  std::map<std::string, std::size_t> method_index;
  for (std::size_t i = 0; i < norm.size(); ++i) {
    auto& row = report.rows[i];
    row.normalized = norm[i];
    row.average = average_score(norm[i]);
    auto [it, fresh] = method_index.emplace(row.method, report.methods.size());
    if (fresh) report.methods.push_back({row.method, 0, {}, 0.0});
    auto& m = report.methods[it->second];
    ++m.samples;
    m.mean.x += norm[i].x;
    m.mean.y += norm[i].y;
    m.mean.z += norm[i].z;
  }
  for (auto& m : report.methods) {
    const double n = static_cast<double>(m.samples);
    m.mean.x /= n;
    m.mean.y /= n;
    m.mean.z /= n;
    m.average = average_score(m.mean);
  }
  return report;
}

nlohmann::json to_json(const TriAxialReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"sample_id", r.sample_id},
                    {"method", r.method},
                    {"raw", score_json(r.raw)},
                    {"normalized", score_json(r.normalized)},
                    {"average", r.average},
                    {"provenance",
                     {{"x", r.raw.x_source}, {"y", r.raw.y_source}, {"z", r.raw.z_source}}},
                    {"flags", r.flags}});
  }
  nlohmann::json methods = nlohmann::json::array();
  for (const auto& m : report.methods) {
    methods.push_back({{"method", m.method},
                       {"samples", m.samples},
                       {"mean", score_json(m.mean)},
                       {"average", m.average}});
  }
  nlohmann::json bounds = nlohmann::json::object();
  const char* names[] = {"x", "y", "z"};
  for (int a = 0; a < 3; ++a) {
    bounds[names[a]] = {{"min", report.bounds[a].min}, {"max", report.bounds[a].max}};
  }
  return {{"mode", "triaxial"},
          {"config",
           {{"semantic_weight", report.config.semantic_weight},
            {"keyword_count", report.config.keyword_count},
            {"normalization", "per-axis min-max to [0, 10]"},
            {"bounds", bounds}}},
          {"samples", rows},
          {"methods", methods}};
}

nlohmann::json to_json(const AdversarialReport& report) {
  nlohmann::json judges = nlohmann::json::array();
  for (const auto& j : report.judges) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : j.records) {
      records.push_back({{"sample_id", r.sample_id},
                         {"axis", r.axis},
                         {"s_ab", r.s_ab},
                         {"s_ba", r.s_ba},
                         {"pref_a", r.pref_a}});
    }
    nlohmann::json axes = nlohmann::json::array();
    for (const auto& a : j.axes) {
      axes.push_back({{"axis", a.axis},
                      {"wins", a.rates.wins},
                      {"losses", a.rates.losses},
                      {"ties", a.rates.ties},
                      {"win_rate", a.rates.win_rate()},
                      {"loss_rate", a.rates.loss_rate()},
                      {"tie_rate", a.rates.tie_rate()}});
    }
    judges.push_back({{"judge", j.judge},
                      {"model_name", j.model_name},
                      {"excluded", j.excluded},
                      {"excluded_count", j.excluded.size()},
                      {"axes", axes},
                      {"records", records}});
  }
  return {{"mode", "adversarial"},
          {"config",
           {{"delta", report.config.delta},
            {"judging", report.config.mode == JudgingMode::PerAxis ? "per-axis" : "single"},
            {"method_a", report.config.method_a},
            {"method_b", report.config.method_b}}},
          {"sample_count", report.sample_count},
          {"judges", judges}};
}

std::string triaxial_csv(const TriAxialReport& report) {
  std::ostringstream os;
  os << "Method,X,Y,Z,Average\n";
  for (const auto& m : report.methods) {
    os << csv_field(m.method) << ',' << fixed2(m.mean.x) << ',' << fixed2(m.mean.y) << ','
       << fixed2(m.mean.z) << ',' << fixed2(m.average) << '\n';
  }
  return os.str();
}

std::string adversarial_csv(const AdversarialReport& report) {
  std::ostringstream os;
  os << "Judge,Axis,Win,Loss,Tie,Excluded\n";
  for (const auto& j : report.judges) {
    for (const auto& a : j.axes) {
      os << csv_field(j.judge) << ',' << a.axis << ',' << fixed2(100.0 * a.rates.win_rate())
         << ',' << fixed2(100.0 * a.rates.loss_rate()) << ',' << fixed2(100.0 * a.rates.tie_rate())
         << ',' << j.excluded.size() << '\n';
    }
  }
  return os.str();
}

}  // namespace zerostylus::evaluation
