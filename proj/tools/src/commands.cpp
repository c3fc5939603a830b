#include "zerostylus_cli/commands.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "zerostylus/embedding.hpp"
#include "zerostylus/evaluation.hpp"
#include "zerostylus/generation.hpp"
#include "zerostylus/matching.hpp"
#include "zerostylus/prompts.hpp"
#include "zerostylus/templates.hpp"
#include "zerostylus/transfer.hpp"
#include "zerostylus/util.hpp"
#include "zerostylus_cli/config.hpp"

namespace zerostylus::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::BackendUnavailable:
    case ErrorCode::ContextOverflow:
      return kExitBackend;
    case ErrorCode::BackendMismatch:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::VersionMismatch:
    case ErrorCode::CorruptFile:
    case ErrorCode::EmptyRepo:
      return kExitRepo;
    default:
      return kExitConfig;
  }
}

std::vector<corpus::RawDocument> load_documents(const fs::path& path) {
  if (path.extension() == ".jsonl") return corpus::load_corpus(path);
  corpus::RawDocument doc;
  doc.doc_id = path.stem().string();
  doc.body = read_file(path);
  if (trim(doc.body).empty()) throw Error(ErrorCode::EmptyDocument, path.string() + " is empty");
  return {doc};
}

// ---------------------------------------------------------------------------
// Output directory

OutputDir::OutputDir(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  if (!fs::exists(dir_)) {
    fs::create_directories(dir_, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir_.string() + ": " + ec.message());
    created_dir_ = true;
  }
  lock_ = dir_ / ".zerostylus.lock";
  const int fd = ::open(lock_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    lock_.clear();
    throw Error(ErrorCode::ConfigError,
                dir_.string() + " is locked by another run (remove .zerostylus.lock if stale)");
  }
  const auto pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
  staging_ = dir_ / (".staging-" + std::to_string(::getpid()));
  fs::create_directories(staging_, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + staging_.string());
}

OutputDir::~OutputDir() {
  std::error_code ec;
  if (!staging_.empty()) fs::remove_all(staging_, ec);
  if (!lock_.empty()) fs::remove(lock_, ec);
  if (created_dir_ && !committed_ && fs::is_empty(dir_, ec)) fs::remove(dir_, ec);
}

void OutputDir::write(const std::string& name, std::string_view content) {
  write_file_atomic(staging_ / name, content);
  staged_.push_back(name);
}

void OutputDir::commit() {
  for (const auto& name : staged_) {
    std::error_code ec;
    fs::rename(staging_ / name, dir_ / name, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot move " + name + " into " + dir_.string());
  }
  committed_ = true;
}

namespace {

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

prompts::PromptLibrary load_prompts(const PipelineConfig& cfg) {
  if (cfg.paths.prompts.empty()) return prompts::PromptLibrary::defaults();
  return prompts::PromptLibrary::load(cfg.paths.prompts);
}

const std::string& require_path(const std::string& value, const char* what) {
  if (value.empty()) throw Error(ErrorCode::ConfigError, std::string("missing ") + what);
  return value;
}

// ---------------------------------------------------------------------------
// acquire

int cmd_acquire(const PipelineConfig& cfg, std::ostream& out) {
  const auto corpus_docs = corpus::load_corpus(require_path(cfg.paths.corpus, "--corpus"));
  const auto rules = cfg.segmentation_rules();

  json sample_info = nullptr;
  std::vector<corpus::RawDocument> refs = corpus_docs;
  if (!cfg.paths.source.empty()) {
    const auto source = load_documents(cfg.paths.source);
    const auto sample = corpus::sample_reference_set(corpus_docs, source.front(),
                                                     cfg.sampling.n_exp, cfg.sampling.sigma,
                                                     cfg.sampling.seed);
    refs = sample.documents;
    std::vector<std::string> ids;
    for (const auto& d : refs) ids.push_back(d.doc_id);
    sample_info = {{"source_doc_id", source.front().doc_id},
                   {"author_id", sample.author_id},
                   {"doc_ids", ids},
                   {"total_chars", sample.total_chars},
                   {"target_chars", sample.target_chars},
                   {"within_tolerance", sample.within_tolerance}};
  }

  const auto prompts = load_prompts(cfg);
  auto embedder = embedding::make_embedding_backend(cfg.embedding);
  auto extractor = generation::make_generation_backend(cfg.generation);

  std::vector<corpus::SegmentedDocument> segmented;
  std::vector<std::string> texts;
  for (const auto& d : refs) {
    segmented.push_back(corpus::segment(d, rules));
    for (const auto& p : segmented.back().paragraphs) {
      for (const auto& s : p.sentences) texts.push_back(s.text);
    }
  }
  const auto embs = embedding::embed_sentences(*embedder, texts);

  std::vector<templates::SentenceInput> inputs;
  {
    std::size_t k = 0;
    for (const auto& d : segmented) {
      for (const auto& p : d.paragraphs) {
        for (const auto& s : p.sentences) {
          inputs.push_back({.sent_id = s.sent_id, .text = s.text, .embedding = embs[k++]});
        }
      }
    }
  }
  auto build = templates::build_sentence_repo(inputs, cfg.clustering);
  for (auto& t : build.repo.templates) t = templates::abstract_template(*extractor, prompts, t);

  // Paragraph embeddings pool the sentence embeddings already computed.
  std::vector<embedding::Embedding> para_embs;
  std::vector<std::vector<int>> para_matches;
  std::vector<const corpus::Paragraph*> paras;
  {
    const auto aggregate = embedding::default_aggregator();
    std::size_t k = 0;
    for (const auto& d : segmented) {
      for (const auto& p : d.paragraphs) {
        std::span<const embedding::Embedding> mine(embs.data() + k, p.sentences.size());
        std::vector<int> ids;
        for (std::size_t i = 0; i < p.sentences.size(); ++i) {
          ids.push_back(matching::match_sentence(build.repo, mine[i], p.sentences[i].sent_id)
                            .template_id);
        }
        para_embs.push_back(aggregate(mine));
        para_matches.push_back(std::move(ids));
        paras.push_back(&p);
        k += p.sentences.size();
      }
    }
  }
  templates::ParagraphRepo p_repo;
  p_repo.epsilon = cfg.epsilon ? *cfg.epsilon : templates::default_epsilon(para_embs);
  p_repo.backend_id = cfg.embedding.backend_id;
  p_repo.dim = embs.front().dim();
  for (std::size_t i = 0; i < paras.size(); ++i) {
    p_repo = templates::insert_paragraph(p_repo, *paras[i], para_embs[i], para_matches[i]).repo;
  }

  const fs::path out_dir = require_path(cfg.paths.output, "--out");
  OutputDir dir(out_dir);
  dir.write("sentence_repo.json", dump(templates::to_json(build.repo)));
  dir.write("paragraph_repo.json", dump(templates::to_json(p_repo)));
  dir.write("references.jsonl", corpus::to_jsonl(refs));
  const json summary = {
      {"reference_documents", refs.size()},
      {"sentences", inputs.size()},
      {"paragraphs", paras.size()},
      {"sentence_templates", build.repo.templates.size()},
      {"clusters", build.cluster_count},
      {"noise", build.noise_count},
      {"eps", build.repo.eps},
      {"min_pts", build.repo.min_pts},
      {"paragraph_templates", p_repo.templates.size()},
      {"epsilon", p_repo.epsilon},
      {"sample", sample_info},
  };
  dir.write("acquisition.json", dump({{"config", to_json(cfg)}, {"summary", summary}}));
  dir.commit();
  out << summary.dump() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// transfer

class Checkpoint {
 public:
  Checkpoint(fs::path path, std::string fingerprint, bool resume) : path_(std::move(path)) {
    if (resume && fs::exists(path_)) {
      std::ifstream in(path_);
      std::string line;
      if (!std::getline(in, line)) throw Error(ErrorCode::CorruptFile, "empty checkpoint");
      json header;
      try {
        header = json::parse(line);
      } catch (const json::exception&) {
        throw Error(ErrorCode::CorruptFile, "bad checkpoint header");
      }
      if (header.value("fingerprint", std::string()) != fingerprint) {
        throw Error(ErrorCode::ConfigError,
                    "checkpoint was written for a different configuration or source");
      }
      std::string kept = line + "\n";
      while (std::getline(in, line)) {
        json j;
        try {
          j = json::parse(line);
        } catch (const json::exception&) {
          spdlog::warn("ignoring truncated checkpoint tail");
          break;
        }
        const auto doc = j.at("doc_id").get<std::string>();
        auto& list = done_[doc];
        if (j.at("index").get<std::size_t>() != list.size()) {
          spdlog::warn("ignoring out-of-order checkpoint entry for {}", doc);
          break;
        }
        list.push_back(transfer::paragraph_result_from_json(j.at("result")));
        kept += line + "\n";
      }
      write_file_atomic(path_, kept);
    } else {
      write_file_atomic(path_, json{{"checkpoint", 1}, {"fingerprint", fingerprint}}.dump() + "\n");
    }
    stream_.open(path_, std::ios::app | std::ios::binary);
    if (!stream_) throw Error(ErrorCode::IoError, "cannot open checkpoint " + path_.string());
  }

  std::vector<transfer::ParagraphResult> done(const std::string& doc_id) const {
    auto it = done_.find(doc_id);
    return it == done_.end() ? std::vector<transfer::ParagraphResult>{} : it->second;
  }

  void append(const std::string& doc_id, std::size_t index, const transfer::ParagraphResult& r) {
    stream_ << json{{"doc_id", doc_id}, {"index", index}, {"result", transfer::to_json(r)}}.dump()
            << "\n";
    stream_.flush();
  }

 private:
  fs::path path_;
  std::map<std::string, std::vector<transfer::ParagraphResult>> done_;
  std::ofstream stream_;
};

int cmd_transfer(const PipelineConfig& cfg, const std::string& checkpoint_path, bool resume,
                 std::size_t stop_after, std::ostream& out) {
  const auto& source_path = require_path(cfg.paths.source, "--source");
  const auto docs = load_documents(source_path);
  const auto variant = cfg.transfer.variant;
  const auto rules = cfg.segmentation_rules();

  std::unique_ptr<embedding::EmbeddingBackend> embedder;
  if (variant != transfer::Variant::DirectPrompt) {
    embedder = embedding::make_embedding_backend(cfg.embedding);
  }
  auto generator = generation::make_generation_backend(cfg.generation);
  const auto prompts = load_prompts(cfg);

  std::optional<templates::SentenceRepo> s_repo;
  std::optional<templates::ParagraphRepo> p_repo;
  if (transfer::needs_sentence_repo(variant)) {
    const fs::path repos = require_path(cfg.paths.repos, "--repos");
    s_repo = templates::load_sentence_repo(repos / "sentence_repo.json", cfg.embedding.backend_id);
  }
  if (transfer::needs_paragraph_repo(variant)) {
    const fs::path repos = require_path(cfg.paths.repos, "--repos");
    p_repo = templates::load_paragraph_repo(repos / "paragraph_repo.json", cfg.embedding.backend_id);
  }
  std::optional<transfer::ReferenceMaterial> refs;
  if (transfer::needs_references(variant)) {
    fs::path ref_path = cfg.paths.references;
    if (ref_path.empty() && !cfg.paths.repos.empty()) {
      ref_path = fs::path(cfg.paths.repos) / "references.jsonl";
    }
    if (ref_path.empty()) {
      throw Error(ErrorCode::ConfigError, std::string(transfer::to_string(variant)) +
                                              " needs --references or --repos");
    }
    const auto ref_docs = corpus::load_corpus(ref_path);
    refs = transfer::ReferenceMaterial::from_documents(ref_docs, rules);
  }

  transfer::TransferResources res;
  res.sentence_repo = s_repo ? &*s_repo : nullptr;
  res.paragraph_repo = p_repo ? &*p_repo : nullptr;
  res.references = refs ? &*refs : nullptr;
  res.embedder = embedder.get();
  res.generator = generator.get();
  res.prompts = &prompts;

  const json echo = to_json(cfg);
  std::optional<Checkpoint> checkpoint;
  if (!checkpoint_path.empty()) {
    const auto fingerprint = hex64(fnv1a(read_file(source_path), fnv1a(echo.dump())));
    checkpoint.emplace(checkpoint_path, fingerprint, resume);
  } else if (resume) {
    throw Error(ErrorCode::ConfigError, "--resume needs --checkpoint");
  }

  // --stop-after simulates an interruption after N freshly finished paragraphs.
  struct Interrupted {};
  std::size_t fresh = 0;

  std::string stylized, documents;
  json traces = json::array();
  std::size_t paragraphs = 0;
  try {
    for (const auto& doc : docs) {
      const auto seg = corpus::segment(doc, rules);
      const auto resumed = checkpoint ? checkpoint->done(doc.doc_id) : std::vector<transfer::ParagraphResult>{};
      auto sink = [&](std::size_t index, const transfer::ParagraphResult& r) {
        if (checkpoint) checkpoint->append(doc.doc_id, index, r);
        if (stop_after && ++fresh >= stop_after) throw Interrupted{};
      };
      const auto result = transfer::transfer_document(seg, res, cfg.transfer, resumed, sink);
      for (std::size_t i = 0; i < result.paragraphs.size(); ++i) {
        const auto& p = result.paragraphs[i];
        stylized += json{{"doc_id", doc.doc_id},
                         {"para_id", p.para_id},
                         {"ordinal", i},
                         {"variant", transfer::to_string(variant)},
                         {"text", p.text},
                         {"separator_after", p.separator_after}}
                        .dump() +
                    "\n";
      }
      paragraphs += result.paragraphs.size();
      documents += json{{"doc_id", doc.doc_id},
                        {"variant", transfer::to_string(variant)},
                        {"text", result.text}}
                       .dump() +
                   "\n";
      traces.push_back(transfer::to_json(result.trace));
    }
  } catch (const Interrupted&) {
    spdlog::warn("stopped after {} paragraphs; resume with --resume", fresh);
    return kExitInternal;
  }

  OutputDir dir(require_path(cfg.paths.output, "--out"));
  dir.write("stylized.jsonl", stylized);
  dir.write("documents.jsonl", documents);
  dir.write("trace.json", dump({{"config", echo}, {"documents", traces}}));
  dir.commit();
  out << json{{"documents", docs.size()},
              {"paragraphs", paragraphs},
              {"variant", transfer::to_string(variant)}}
             .dump()
      << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// evaluate / adversarial

struct MethodOutput {
  std::string method;
  std::map<std::string, std::vector<std::string>> paragraphs;  // doc_id -> paragraph texts
  std::map<std::string, std::string> documents;                // doc_id -> full text
};

std::vector<json> read_jsonl(const fs::path& path) {
  std::vector<json> out;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
    }
  }
  return out;
}

void read_stylized(const fs::path& path, MethodOutput& m) {
  for (const auto& j : read_jsonl(path)) {
    if (m.method.empty()) m.method = j.at("variant").get<std::string>();
    auto& list = m.paragraphs[j.at("doc_id").get<std::string>()];
    if (j.at("ordinal").get<std::size_t>() != list.size()) {
      throw Error(ErrorCode::ConfigError, path.string() + ": paragraph ordinals out of order");
    }
    list.push_back(j.at("text").get<std::string>());
  }
}

MethodOutput read_output(const fs::path& path) {
  MethodOutput m;
  try {
    if (fs::is_directory(path)) {
      read_stylized(path / "stylized.jsonl", m);
      if (fs::exists(path / "documents.jsonl")) {
        for (const auto& j : read_jsonl(path / "documents.jsonl")) {
          m.documents[j.at("doc_id").get<std::string>()] = j.at("text").get<std::string>();
        }
      }
    } else {
      const auto rows = read_jsonl(path);
      if (!rows.empty() && rows.front().contains("para_id")) {
        read_stylized(path, m);
      } else {
        for (const auto& j : rows) {
          if (m.method.empty() && j.contains("variant")) m.method = j.at("variant").get<std::string>();
          const auto text = j.contains("text") ? j.at("text") : j.at("body");
          m.documents[j.at("doc_id").get<std::string>()] = text.get<std::string>();
        }
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  if (m.method.empty()) m.method = path.filename().string();
  return m;
}

std::vector<MethodOutput> read_outputs(const std::vector<std::string>& paths) {
  std::vector<MethodOutput> out;
  std::map<std::string, int> seen;
  for (const auto& p : paths) {
    out.push_back(read_output(p));
    const int n = ++seen[out.back().method];
    if (n > 1) out.back().method += "#" + std::to_string(n);
  }
  return out;
}

std::string document_text(const MethodOutput& m, const corpus::SegmentedDocument& src) {
  if (auto it = m.documents.find(src.doc_id); it != m.documents.end()) return it->second;
  if (auto it = m.paragraphs.find(src.doc_id); it != m.paragraphs.end()) {
    std::string text;
    for (std::size_t i = 0; i < it->second.size(); ++i) text += (i ? "\n\n" : "") + it->second[i];
    return text;
  }
  throw Error(ErrorCode::ConfigError, "output '" + m.method + "' has no document " + src.doc_id);
}

// Paragraph texts of `m` aligned to `src`, or empty when the counts differ.
std::vector<std::string> aligned(const MethodOutput& m, const corpus::SegmentedDocument& src) {
  auto it = m.paragraphs.find(src.doc_id);
  if (it == m.paragraphs.end() || it->second.size() != src.paragraphs.size()) return {};
  return it->second;
}

struct EvalInputs {
  std::vector<corpus::SegmentedDocument> sources;
  std::vector<corpus::SegmentedDocument> references;
  std::string reference_text;
};

EvalInputs load_eval_inputs(const PipelineConfig& cfg) {
  EvalInputs in;
  const auto rules = cfg.segmentation_rules();
  for (const auto& d : load_documents(require_path(cfg.paths.source, "--source"))) {
    in.sources.push_back(corpus::segment(d, rules));
  }
  fs::path ref_path = cfg.paths.references;
  if (ref_path.empty() && !cfg.paths.repos.empty()) ref_path = fs::path(cfg.paths.repos) / "references.jsonl";
  if (ref_path.empty()) throw Error(ErrorCode::ConfigError, "missing --references");
  const auto ref_docs = corpus::load_corpus(ref_path);
  const auto material = transfer::ReferenceMaterial::from_documents(ref_docs, rules);
  in.references = material.documents;
  in.reference_text = material.full_text;
  return in;
}

int cmd_evaluate(const PipelineConfig& cfg, const std::vector<std::string>& outputs,
                 std::ostream& out) {
  if (outputs.empty()) throw UsageError("tri-axial evaluation needs at least one output");
  const auto in = load_eval_inputs(cfg);
  const auto methods = read_outputs(outputs);

  std::vector<std::string> ref_paras;
  for (const auto& d : in.references) {
    for (const auto& p : d.paragraphs) ref_paras.push_back(p.text());
  }

  std::vector<evaluation::TriAxialSample> samples;
  for (const auto& m : methods) {
    for (const auto& src : in.sources) {
      const auto paras = aligned(m, src);
      if (paras.empty()) {
        samples.push_back({src.doc_id + "/" + m.method, m.method, src.reassemble(),
                           document_text(m, src), ref_paras});
        continue;
      }
      for (std::size_t i = 0; i < paras.size(); ++i) {
        samples.push_back({src.paragraphs[i].para_id + "/" + m.method, m.method,
                           src.paragraphs[i].text(), paras[i], ref_paras});
      }
    }
  }

  auto embedder = embedding::make_embedding_backend(cfg.embedding);
  auto judge = generation::make_generation_backend(cfg.quality_judge().spec);
  const auto prompts = load_prompts(cfg);
  evaluation::Scorers scorers;
  scorers.embedder = embedder.get();
  scorers.quality_judge = judge.get();
  scorers.prompts = &prompts;
  if (cfg.evaluation.semantic_scorer == "judge") {
    scorers.semantic = evaluation::judge_similarity_scorer(*judge, prompts);
    scorers.semantic_name = "judge:" + judge->spec().backend_id;
  } else {
    scorers.semantic = evaluation::token_f1_scorer();
  }
  const auto report = evaluation::triaxial_evaluate(
      samples, scorers, {cfg.evaluation.semantic_weight, cfg.evaluation.keyword_count});

  json labels = json::array();
  for (std::size_t i = 0; i < methods.size(); ++i) {
    labels.push_back({{"method", methods[i].method}, {"path", outputs[i]}});
  }
  OutputDir dir(require_path(cfg.paths.output, "--out"));
  dir.write("report.json",
            dump({{"config", to_json(cfg)}, {"outputs", labels}, {"report", evaluation::to_json(report)}}));
  if (cfg.evaluation.csv) dir.write("report.csv", evaluation::triaxial_csv(report));
  dir.commit();
  out << evaluation::triaxial_csv(report);
  return kExitOk;
}

int cmd_adversarial(const PipelineConfig& cfg, const std::vector<std::string>& outputs,
                    std::ostream& out) {
  if (outputs.size() != 2) {
    throw UsageError("adversarial evaluation needs exactly two outputs, got " +
                     std::to_string(outputs.size()));
  }
  const auto in = load_eval_inputs(cfg);
  const auto methods = read_outputs(outputs);

  std::vector<evaluation::AdversarialSample> samples;
  for (const auto& src : in.sources) {
    const auto a = aligned(methods[0], src);
    const auto b = aligned(methods[1], src);
    if (a.empty() || b.empty()) {
      samples.push_back({src.doc_id, src.reassemble(), in.reference_text,
                         document_text(methods[0], src), document_text(methods[1], src)});
      continue;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
      samples.push_back({src.paragraphs[i].para_id, src.paragraphs[i].text(), in.reference_text,
                         a[i], b[i]});
    }
  }

  std::vector<std::unique_ptr<generation::GenerationBackend>> backends;
  std::vector<evaluation::Judge> judges;
  for (const auto& j : cfg.judges) {
    backends.push_back(generation::make_generation_backend(j.spec));
    judges.push_back({j.name, backends.back().get()});
  }
  const auto prompts = load_prompts(cfg);
  evaluation::AdversarialConfig acfg;
  acfg.delta = cfg.evaluation.delta;
  acfg.mode = cfg.evaluation.judging;
  acfg.max_in_flight = cfg.evaluation.max_in_flight;
  acfg.method_a = methods[0].method;
  acfg.method_b = methods[1].method;
  const auto report = evaluation::adversarial_run(samples, judges, prompts, acfg);

  OutputDir dir(require_path(cfg.paths.output, "--out"));
  dir.write("report.json", dump({{"config", to_json(cfg)},
                                 {"outputs", outputs},
                                 {"report", evaluation::to_json(report)}}));
  if (cfg.evaluation.csv) dir.write("report.csv", evaluation::adversarial_csv(report));
  dir.commit();
  out << evaluation::adversarial_csv(report);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// repo inspect

int cmd_repo_inspect(const std::string& path, std::ostream& out) {
  json raw;
  try {
    raw = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptFile, path + ": " + e.what());
  }
  const auto kind = raw.is_object() ? raw.value("kind", std::string()) : std::string();
  json summary;
  if (kind == "sentence_repo") {
    const auto repo = templates::load_sentence_repo(path);
    json items = json::array();
    for (const auto& t : repo.templates) {
      items.push_back({{"id", t.template_id},
                       {"members", t.member_count},
                       {"medoid", t.medoid_text},
                       {"pattern", t.abstracted_pattern ? json(*t.abstracted_pattern) : json(nullptr)}});
    }
    summary = {{"kind", kind}, {"backend_id", repo.backend_id}, {"dim", repo.dim},
               {"eps", repo.eps}, {"min_pts", repo.min_pts}, {"templates", items}};
  } else if (kind == "paragraph_repo") {
    const auto repo = templates::load_paragraph_repo(path);
    json items = json::array();
    for (const auto& t : repo.templates) {
      items.push_back({{"id", t.template_id},
                       {"members", t.member_count},
                       {"exemplar_para_id", t.exemplar_para_id},
                       {"sentence_template_ids", t.sentence_template_ids}});
    }
    summary = {{"kind", kind}, {"backend_id", repo.backend_id}, {"dim", repo.dim},
               {"epsilon", repo.epsilon}, {"templates", items}};
  } else {
    throw Error(ErrorCode::CorruptFile, path + " is not a template repository");
  }
  out << summary.dump(2) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// command line

struct Flags {
  std::string config_file;
  std::vector<std::string> assignments;
  bool error_json = false;
  std::string log_level = "warn";

  std::optional<double> alpha, delta, sigma, eps, epsilon;
  std::optional<std::string> variant;
  std::optional<std::size_t> window_sentences, min_pts;
  std::optional<int> n_exp;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> prompts;

  std::optional<std::string> corpus, source, repos, references, output;
  std::string checkpoint;
  bool resume = false;
  std::size_t stop_after = 0;
  std::string mode = "triaxial";
  bool csv = false;
  std::vector<std::string> outputs;
  std::string repo_path;
};

PipelineConfig resolve(const Flags& f) {
  auto cfg = default_config();
  if (!f.config_file.empty()) apply_config_file(cfg, f.config_file);
  for (const auto& a : f.assignments) apply_assignment(cfg, a);
  if (f.alpha) cfg.transfer.alpha = *f.alpha;
  if (f.variant) cfg.transfer.variant = transfer::parse_variant(*f.variant);
  if (f.window_sentences) cfg.transfer.window_sentences = *f.window_sentences;
  if (f.delta) cfg.evaluation.delta = *f.delta;
  if (f.n_exp) cfg.sampling.n_exp = *f.n_exp;
  if (f.sigma) cfg.sampling.sigma = *f.sigma;
  if (f.seed) cfg.sampling.seed = *f.seed;
  if (f.eps) cfg.clustering.eps = *f.eps;
  if (f.min_pts) cfg.clustering.min_pts = *f.min_pts;
  if (f.epsilon) cfg.epsilon = *f.epsilon;
  if (f.prompts) cfg.paths.prompts = *f.prompts;
  if (f.corpus) cfg.paths.corpus = *f.corpus;
  if (f.source) cfg.paths.source = *f.source;
  if (f.repos) cfg.paths.repos = *f.repos;
  if (f.references) cfg.paths.references = *f.references;
  if (f.output) cfg.paths.output = *f.output;
  if (f.csv) cfg.evaluation.csv = true;
  cfg.validate();
  return cfg;
}

void report_error(std::ostream& out, std::ostream& err, bool as_json, const std::string& code,
                  int exit_code, const std::string& message) {
  err << "error: " << message << "\n";
  if (as_json) {
    out << json{{"error", {{"code", code}, {"exit_code", exit_code}, {"message", message}}}}.dump()
        << "\n";
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Flags f;
  CLI::App app{"Template-guided long-text style transfer", "zerostylus"};
  app.fallthrough();
  app.require_subcommand(1);
  app.add_option("--config", f.config_file, "TOML-style config file or a JSON config echo");
  app.add_option("--set", f.assignments, "Override a config key: section.key=value");
  app.add_flag("--error-json", f.error_json, "Print a JSON error object on failure");
  app.add_option("--log-level", f.log_level, "trace|debug|info|warn|error|off");
  app.add_option("--alpha", f.alpha, "Style intensity in [0, 1]");
  app.add_option("--variant", f.variant, "StructuredRewritten|SentencePattern|TemplateOnly|DirectPrompt|ConvTransfer");
  app.add_option("--window-sentences", f.window_sentences, "Sentences per rewrite window");
  app.add_option("--delta", f.delta, "Win-rate decision margin");
  app.add_option("--n-exp", f.n_exp, "Reference documents to sample");
  app.add_option("--sigma", f.sigma, "Reference/source length ratio");
  app.add_option("--seed", f.seed, "Sampler seed");
  app.add_option("--eps", f.eps, "DBSCAN radius (default: k-distance heuristic)");
  app.add_option("--min-pts", f.min_pts, "DBSCAN core-point threshold");
  app.add_option("--epsilon", f.epsilon, "Paragraph-template separation threshold");
  app.add_option("--prompts", f.prompts, "Directory of prompt overrides");

  auto* acquire = app.add_subcommand("acquire", "Build sentence and paragraph template repositories");
  acquire->add_option("--corpus", f.corpus, "Reference corpus (JSON lines)");
  acquire->add_option("--source", f.source, "Source document; enables reference sampling");
  acquire->add_option("--out", f.output, "Repository output directory");

  auto* transfer_cmd = app.add_subcommand("transfer", "Rewrite source documents");
  transfer_cmd->add_option("--source", f.source, "Source documents (.jsonl or plain text)");
  transfer_cmd->add_option("--repos", f.repos, "Repository directory written by acquire");
  transfer_cmd->add_option("--references", f.references, "Reference corpus (default: <repos>/references.jsonl)");
  transfer_cmd->add_option("--out", f.output, "Output directory");
  transfer_cmd->add_option("--checkpoint", f.checkpoint, "Checkpoint file updated after every paragraph");
  transfer_cmd->add_flag("--resume", f.resume, "Continue from --checkpoint");
  transfer_cmd->add_option("--stop-after", f.stop_after, "Stop after N paragraphs (testing interruptions)");

  auto add_eval_inputs = [&](CLI::App* cmd) {
    cmd->add_option("--source", f.source, "Source documents");
    cmd->add_option("--references", f.references, "Reference corpus");
    cmd->add_option("--repos", f.repos, "Repository directory (for references.jsonl)");
    cmd->add_option("--out", f.output, "Report directory");
    cmd->add_flag("--csv", f.csv, "Also write report.csv");
    cmd->add_option("outputs", f.outputs, "Transfer output directories or JSON-lines files");
  };
  auto* evaluate = app.add_subcommand("evaluate", "Score transfer outputs");
  add_eval_inputs(evaluate);
  evaluate->add_option("--mode", f.mode, "triaxial|adversarial")
      ->check(CLI::IsMember({"triaxial", "adversarial"}));
  auto* adversarial = app.add_subcommand("adversarial", "Pairwise judging of two outputs");
  add_eval_inputs(adversarial);

  auto* repo = app.add_subcommand("repo", "Repository utilities");
  repo->require_subcommand(1);
  auto* inspect = repo->add_subcommand("inspect", "Summarize a repository file");
  inspect->add_option("path", f.repo_path, "sentence_repo.json or paragraph_repo.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    report_error(out, err, f.error_json, "UsageError", kExitUsage, e.what());
    return kExitUsage;
  }

  spdlog::set_level(spdlog::level::from_str(f.log_level));
  try {
    if (*repo) return cmd_repo_inspect(f.repo_path, out);
    const auto cfg = resolve(f);
    if (*acquire) return cmd_acquire(cfg, out);
    if (*transfer_cmd) return cmd_transfer(cfg, f.checkpoint, f.resume, f.stop_after, out);
    if (*adversarial || (*evaluate && f.mode == "adversarial")) return cmd_adversarial(cfg, f.outputs, out);
    return cmd_evaluate(cfg, f.outputs, out);
  } catch (const UsageError& e) {
    report_error(out, err, f.error_json, "UsageError", kExitUsage, e.what());
    return kExitUsage;
  } catch (const Error& e) {
    const int code = exit_code_for(e.code());
    report_error(out, err, f.error_json, std::string(to_string(e.code())), code, e.what());
    return code;
  } catch (const json::exception& e) {
    report_error(out, err, f.error_json, "ConfigError", kExitConfig, e.what());
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    report_error(out, err, f.error_json, "IoError", kExitConfig, e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    report_error(out, err, f.error_json, "InternalError", kExitInternal, e.what());
    return kExitInternal;
  }
}

}  // namespace zerostylus::cli
