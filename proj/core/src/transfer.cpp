#include "zerostylus/transfer.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <future>
#include <numeric>

#include <spdlog/spdlog.h>

#include "zerostylus/error.hpp"
#include "zerostylus/util.hpp"

namespace zerostylus::transfer {

using embedding::Embedding;
using generation::Fields;
using generation::Stage;

namespace {

constexpr std::array<Variant, 5> kVariants = {
    Variant::StructuredRewritten, Variant::SentencePattern, Variant::TemplateOnly,
    Variant::DirectPrompt, Variant::ConvTransfer};

std::string one_line(std::string_view text) {
  std::string out(trim(text));
  for (auto& c : out) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return out;
}

std::vector<std::string> reply_lines(std::string_view reply) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos <= reply.size()) {
    auto nl = reply.find('\n', pos);
    if (nl == std::string_view::npos) nl = reply.size();
    auto line = trim(reply.substr(pos, nl - pos));
    if (!line.empty()) lines.emplace_back(line);
    pos = nl + 1;
  }
  return lines;
}

std::string join_lines(std::span<const std::string> lines) {
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) out += '\n';
    out += one_line(lines[i]);
  }
  return out;
}

std::string bullet_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += '\n';
    out += "- " + one_line(items[i]);
  }
  return out;
}

std::string structure_of(const templates::ParagraphTemplate& tp) {
  std::string out = "P" + std::to_string(tp.template_id) + ":";
  for (std::size_t i = 0; i < tp.sentence_template_ids.size(); ++i) {
    out += i ? " > S" : " S";
    out += std::to_string(tp.sentence_template_ids[i]);
  }
  return out;
}

Fields base_fields(const corpus::SentenceUnit& s, const TransferConfig& cfg,
                   std::span<const std::string> context) {
  return {{"source", one_line(s.text)},
          {"alpha", format_number(cfg.alpha)},
          {"style_instruction", style_instruction(cfg.alpha)},
          {"context", context.empty() ? std::string("(none)") : join_lines(context)}};
}

void add_sentence_template(Fields& f, const templates::SentenceTemplate& ts) {
  f["sentence_template"] = ts.prompt_text();
  f["sentence_template_id"] = std::to_string(ts.template_id);
}

void add_paragraph_template(Fields& f, const templates::ParagraphTemplate& tp) {
  f["paragraph_template"] = tp.exemplar_text;
  f["paragraph_template_id"] = std::to_string(tp.template_id);
  f["paragraph_structure"] = structure_of(tp);
}

struct Generated {
  std::string text;
  std::string prompt;
  std::string raw;
};

Generated generate_with(generation::GenerationBackend& backend,
                        const prompts::PromptLibrary& prompts, std::string_view scope,
                        const corpus::SentenceUnit& s, const TransferConfig& cfg, Fields fields) {
  if (cfg.alpha == 0.0) return {s.text, {}, {}};
  generation::GenerationRequest req{Stage::Generate, prompts.render(scope, Stage::Generate, fields),
                                    std::move(fields)};
  auto raw = generation::call(backend, req);
  auto text = one_line(raw);
  if (text.empty()) {
    spdlog::warn("empty generation for {}, keeping the source sentence", s.sent_id);
    text = s.text;
  }
  return {std::move(text), std::move(req.prompt), std::move(raw)};
}

/// Joins output sentences with the source paragraph's separators; extra
/// sentences (refinement split one) are joined with a single space.
std::string join_paragraph(const corpus::Paragraph& src, const std::vector<std::string>& out) {
  std::string text;
  for (std::size_t i = 0; i < out.size(); ++i) {
    text += out[i];
    if (i + 1 < out.size()) {
      text += i + 1 < src.sentences.size() ? src.sentences[i].separator_after : std::string(" ");
    }
  }
  return text;
}

std::vector<std::size_t> top_k(const Embedding& query, std::span<const Embedding> pool,
                               std::size_t k) {
  std::vector<double> scores;
  scores.reserve(pool.size());
  for (const auto& e : pool) scores.push_back(embedding::cosine_similarity(query, e));
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
                    });
  idx.resize(k);
  return idx;
}

struct WindowOutput {
  std::vector<std::string> sentences;
  WindowTrace trace;
};

class Engine {
 public:
  Engine(const corpus::SegmentedDocument& src, const TransferResources& res,
         const TransferConfig& cfg)
      : src_(src), res_(res), cfg_(cfg) {
    if (needs_references(cfg_.variant) && cfg_.variant != Variant::DirectPrompt &&
        cfg_.alpha > 0.0) {
      std::vector<std::string> texts;
      for (const auto& s : res_.references->sentences) texts.push_back(s.text);
      ref_embeddings_ = embedding::embed_sentences(*res_.embedder, texts);
    }
  }

  ParagraphResult run(std::size_t index) const {
    const auto started = std::chrono::steady_clock::now();
    const auto& para = src_.paragraphs[index];
    ParagraphResult result;
    result.trace.para_id = para.para_id;
    for (const auto& s : para.sentences) {
      TraceRecord r;
      r.sent_id = s.sent_id;
      result.trace.records.push_back(std::move(r));
    }

    std::vector<WindowOutput> windows;
    switch (cfg_.variant) {
      case Variant::StructuredRewritten: structured(para, result.trace, windows); break;
      case Variant::SentencePattern: sentence_pattern(para, result.trace, windows); break;
      case Variant::TemplateOnly: template_only(para, result.trace, windows); break;
      case Variant::ConvTransfer: conv_transfer(para, result.trace, windows); break;
      case Variant::DirectPrompt: break;  // handled at document level
    }

    for (auto& w : windows) {
      for (auto& s : w.sentences) result.output.sentences.push_back(std::move(s));
      result.trace.windows.push_back(std::move(w.trace));
    }
    result.output.para_id = para.para_id;
    result.output.text = join_paragraph(para, result.output.sentences);
    result.output.separator_after = para.separator_after;
    if (cfg_.trace_timing) {
      result.trace.elapsed_ms = std::chrono::duration<double, std::milli>(
                                    std::chrono::steady_clock::now() - started)
                                    .count();
    }
    return result;
  }

 private:
  using WindowFn = std::function<WindowOutput(std::size_t, std::size_t)>;

  // Windows of cfg.window_sentences; a window whose prompt overflows the
  // context is halved until single sentences, then the overflow propagates.
  void run_windows(std::size_t n, const WindowFn& fn, ParagraphTrace& trace,
                   std::vector<WindowOutput>& out) const {
    std::function<void(std::size_t, std::size_t)> one = [&](std::size_t b, std::size_t e) {
      try {
        auto w = fn(b, e);
        w.trace.first_sentence = b;
        w.trace.size = e - b;
        for (std::size_t i = b; i < e; ++i) trace.records[i].window = out.size();
        out.push_back(std::move(w));
      } catch (const Error& err) {
        if (err.code() != ErrorCode::ContextOverflow || e - b == 1) throw;
        ++trace.window_splits;
        const std::size_t mid = b + (e - b) / 2;
        one(b, mid);
        one(mid, e);
      }
    };
    for (std::size_t b = 0; b < n; b += cfg_.window_sentences) {
      one(b, std::min(n, b + cfg_.window_sentences));
    }
  }

  static void assign_refined(ParagraphTrace& trace, std::size_t b, std::size_t e,
                             const std::vector<std::string>& lines) {
    for (std::size_t i = b; i < e; ++i) {
      const std::size_t k = i - b;
      trace.records[i].refined_text = k < lines.size() ? lines[k] : std::string{};
    }
    for (std::size_t k = e - b; k < lines.size(); ++k) {
      trace.records[e - 1].refined_text += " " + lines[k];
    }
  }

  void structured(const corpus::Paragraph& para, ParagraphTrace& trace,
                  std::vector<WindowOutput>& out) const {
    const auto fm = matching::match_paragraph_full(*res_.sentence_repo, *res_.paragraph_repo, para,
                                                   *res_.embedder, res_.aggregate,
                                                   cfg_.low_confidence_margin);
    const auto& tau_p = res_.paragraph_repo->at(fm.paragraph.template_id);
    trace.paragraph_template_id = tau_p.template_id;
    trace.paragraph_distance = fm.paragraph.distance;
    for (std::size_t i = 0; i < fm.sentences.size(); ++i) {
      auto& r = trace.records[i];
      r.sentence_template_id = fm.sentences[i].template_id;
      r.match_score = fm.sentences[i].score;
      r.match_margin = fm.sentences[i].margin;
      r.low_confidence = fm.sentences[i].low_confidence;
      r.paragraph_template_id = tau_p.template_id;
    }

    run_windows(para.sentences.size(), [&](std::size_t b, std::size_t e) {
      WindowOutput w;
      std::vector<std::string> drafts;
      for (std::size_t i = b; i < e; ++i) {
        Fields f = base_fields(para.sentences[i], cfg_, drafts);
        add_sentence_template(f, res_.sentence_repo->at(fm.sentences[i].template_id));
        add_paragraph_template(f, tau_p);
        auto g = generate_with(*res_.generator, *res_.prompts, to_string(cfg_.variant),
                               para.sentences[i], cfg_, std::move(f));
        trace.records[i].prompt = std::move(g.prompt);
        trace.records[i].raw_generation = std::move(g.raw);
        drafts.push_back(std::move(g.text));
      }
      auto refined = refine_paragraph(*res_.generator, *res_.prompts, drafts, tau_p, cfg_);
      if (refined.attempts > 0) w.trace.calls.push_back({"refine", refined.prompt, refined.raw});
      w.trace.refinement_skipped = refined.skipped;
      w.trace.refine_attempts = refined.attempts;
      assign_refined(trace, b, e, refined.sentences);
      w.sentences = std::move(refined.sentences);
      return w;
    }, trace, out);
  }

  void sentence_pattern(const corpus::Paragraph& para, ParagraphTrace& trace,
                        std::vector<WindowOutput>& out) const {
    const auto embs = matching::embed_paragraph(para, *res_.embedder);
    std::vector<matching::MatchResult> matches;
    for (std::size_t i = 0; i < embs.size(); ++i) {
      matches.push_back(matching::match_sentence(*res_.sentence_repo, embs[i],
                                                 para.sentences[i].sent_id,
                                                 cfg_.low_confidence_margin));
      auto& r = trace.records[i];
      r.sentence_template_id = matches.back().template_id;
      r.match_score = matches.back().score;
      r.match_margin = matches.back().margin;
      r.low_confidence = matches.back().low_confidence;
    }
    run_windows(para.sentences.size(), [&](std::size_t b, std::size_t e) {
      WindowOutput w;
      for (std::size_t i = b; i < e; ++i) {
        Fields f = base_fields(para.sentences[i], cfg_, w.sentences);
        add_sentence_template(f, res_.sentence_repo->at(matches[i].template_id));
        auto g = generate_with(*res_.generator, *res_.prompts, to_string(cfg_.variant),
                               para.sentences[i], cfg_, std::move(f));
        trace.records[i].prompt = std::move(g.prompt);
        trace.records[i].raw_generation = std::move(g.raw);
        trace.records[i].refined_text = g.text;
        w.sentences.push_back(std::move(g.text));
      }
      return w;
    }, trace, out);
  }

  std::vector<std::string> excerpts(const Embedding& query) const {
    std::vector<std::string> out;
    for (auto i : top_k(query, ref_embeddings_, cfg_.reference_k)) {
      out.push_back(res_.references->sentences[i].text);
    }
    return out;
  }

  void template_only(const corpus::Paragraph& para, ParagraphTrace& trace,
                     std::vector<WindowOutput>& out) const {
    std::vector<Embedding> embs;
    if (cfg_.alpha > 0.0) embs = matching::embed_paragraph(para, *res_.embedder);
    run_windows(para.sentences.size(), [&](std::size_t b, std::size_t e) {
      WindowOutput w;
      for (std::size_t i = b; i < e; ++i) {
        Fields f = base_fields(para.sentences[i], cfg_, w.sentences);
        if (!embs.empty()) {
          const auto refs = excerpts(embs[i]);
          f["references"] = bullet_list(refs);
          f["reference_count"] = std::to_string(refs.size());
        }
        auto g = generate_with(*res_.generator, *res_.prompts, to_string(cfg_.variant),
                               para.sentences[i], cfg_, std::move(f));
        trace.records[i].prompt = std::move(g.prompt);
        trace.records[i].raw_generation = std::move(g.raw);
        trace.records[i].refined_text = g.text;
        w.sentences.push_back(std::move(g.text));
      }
      return w;
    }, trace, out);
  }

  void conv_transfer(const corpus::Paragraph& para, ParagraphTrace& trace,
                     std::vector<WindowOutput>& out) const {
    std::vector<Embedding> embs;
    if (cfg_.alpha > 0.0) embs = matching::embed_paragraph(para, *res_.embedder);
    run_windows(para.sentences.size(), [&](std::size_t b, std::size_t e) {
      WindowOutput w;
      std::vector<std::string> source;
      for (std::size_t i = b; i < e; ++i) source.push_back(para.sentences[i].text);
      if (cfg_.alpha == 0.0) {
        assign_refined(trace, b, e, source);
        w.sentences = std::move(source);
        return w;
      }

      // Each stage must return exactly one line per input line; one retry.
      auto stage = [&](Stage st, Fields f) -> std::optional<std::vector<std::string>> {
        const auto prompt = res_.prompts->render(to_string(cfg_.variant), st, f);
        for (int attempt = 0; attempt < 2; ++attempt) {
          generation::GenerationRequest req{st, prompt, f};
          auto raw = generation::call(*res_.generator, req);
          w.trace.calls.push_back({std::string(generation::to_string(st)), prompt, raw});
          auto lines = reply_lines(raw);
          if (lines.size() == e - b) return lines;
        }
        return std::nullopt;
      };

      auto neutral = stage(Stage::Destylize, {{"window", join_lines(source)}});
      std::optional<std::vector<std::string>> styled;
      if (neutral) {
        const auto pooled = embedding::mean_pool(
            std::span<const Embedding>(embs).subspan(b, e - b));
        const auto refs = excerpts(pooled);
        styled = stage(Stage::Restylize, {{"window", join_lines(*neutral)},
                                          {"references", bullet_list(refs)},
                                          {"reference_count", std::to_string(refs.size())},
                                          {"alpha", format_number(cfg_.alpha)},
                                          {"style_instruction", style_instruction(cfg_.alpha)}});
      }
      if (!styled) {
        spdlog::warn("{}: window {}..{} kept unchanged, reply line count mismatch", para.para_id,
                     b, e);
        w.trace.alignment_failed = true;
        styled = source;
      }
      for (std::size_t i = b; i < e; ++i) {
        trace.records[i].raw_generation = (*styled)[i - b];
      }
      assign_refined(trace, b, e, *styled);
      w.sentences = std::move(*styled);
      return w;
    }, trace, out);
  }

  const corpus::SegmentedDocument& src_;
  const TransferResources& res_;
  const TransferConfig& cfg_;
  std::vector<Embedding> ref_embeddings_;
};

void check_repo_backend(const std::string& repo_backend, const embedding::EmbeddingBackend& e,
                        const char* what) {
  if (repo_backend != e.spec().backend_id) {
    throw Error(ErrorCode::BackendMismatch, std::string(what) + " built with '" + repo_backend +
                                                "' but the embedder is '" +
                                                e.spec().backend_id + "'");
  }
}

void validate_resources(const TransferResources& res, const TransferConfig& cfg) {
  if (!res.generator || !res.prompts) {
    throw Error(ErrorCode::InvalidArgument, "transfer needs a generator and a prompt library");
  }
  if (cfg.variant != Variant::DirectPrompt && !res.embedder) {
    throw Error(ErrorCode::InvalidArgument, "transfer needs an embedding backend");
  }
  if (needs_sentence_repo(cfg.variant)) {
    if (!res.sentence_repo || res.sentence_repo->empty()) {
      throw Error(ErrorCode::EmptyRepo, std::string(to_string(cfg.variant)) +
                                            " needs a non-empty sentence repository");
    }
    check_repo_backend(res.sentence_repo->backend_id, *res.embedder, "sentence repository");
  }
  if (needs_paragraph_repo(cfg.variant)) {
    if (!res.paragraph_repo || res.paragraph_repo->empty()) {
      throw Error(ErrorCode::EmptyRepo, std::string(to_string(cfg.variant)) +
                                            " needs a non-empty paragraph repository");
    }
    check_repo_backend(res.paragraph_repo->backend_id, *res.embedder, "paragraph repository");
  }
  if (needs_references(cfg.variant) &&
      (!res.references || res.references->sentences.empty())) {
    throw Error(ErrorCode::ConfigError,
                std::string(to_string(cfg.variant)) + " needs reference documents");
  }
}

ParagraphResult identity_paragraph(const corpus::Paragraph& p) {
  ParagraphResult r;
  r.output.para_id = p.para_id;
  for (const auto& s : p.sentences) {
    r.output.sentences.push_back(s.text);
    TraceRecord rec;
    rec.sent_id = s.sent_id;
    rec.refined_text = s.text;
    r.trace.records.push_back(std::move(rec));
  }
  r.output.text = p.text();
  r.output.separator_after = p.separator_after;
  r.trace.para_id = p.para_id;
  return r;
}

StylizedDocument direct_prompt(const corpus::SegmentedDocument& src,
                               const TransferResources& res, const TransferConfig& cfg,
                               StylizedDocument doc) {
  doc.trace.structure_exempt = true;
  if (cfg.alpha == 0.0) {
    doc.leading = src.leading;
    for (const auto& p : src.paragraphs) {
      auto r = identity_paragraph(p);
      doc.paragraphs.push_back(r.output);
      doc.trace.paragraphs.push_back(std::move(r.trace));
    }
    doc.text = src.reassemble();
    return doc;
  }

  const std::string body = src.reassemble();
  Fields f = {{"source", body},
              {"references", res.references->full_text},
              {"alpha", format_number(cfg.alpha)},
              {"style_instruction", style_instruction(cfg.alpha)}};
  generation::GenerationRequest req{Stage::Direct,
                                    res.prompts->render(to_string(cfg.variant), Stage::Direct, f),
                                    f};
  auto raw = generation::call(*res.generator, req);
  doc.trace.document_prompt = req.prompt;
  doc.trace.document_generation = raw;
  doc.text = raw;

  try {
    const auto seg = corpus::segment({src.doc_id, std::nullopt, {}, raw});
    doc.leading = seg.leading;
    for (std::size_t i = 0; i < seg.paragraphs.size(); ++i) {
      const auto& p = seg.paragraphs[i];
      StylizedParagraph sp;
      sp.para_id = i < src.paragraphs.size() ? src.paragraphs[i].para_id : p.para_id;
      for (const auto& s : p.sentences) sp.sentences.push_back(s.text);
      sp.text = p.text();
      sp.separator_after = p.separator_after;
      doc.paragraphs.push_back(std::move(sp));
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EmptyDocument) throw;
    spdlog::warn("direct prompt returned no text for {}", src.doc_id);
  }
  return doc;
}

}  // namespace

std::string_view to_string(Variant v) noexcept {
  switch (v) {
    case Variant::StructuredRewritten: return "StructuredRewritten";
    case Variant::SentencePattern: return "SentencePattern";
    case Variant::TemplateOnly: return "TemplateOnly";
    case Variant::DirectPrompt: return "DirectPrompt";
    case Variant::ConvTransfer: return "ConvTransfer";
  }
  return "Unknown";
}

Variant parse_variant(std::string_view name) {
  for (auto v : kVariants) {
    if (to_string(v) == name) return v;
  }
  throw Error(ErrorCode::ConfigError, "unknown variant '" + std::string(name) + "'");
}

std::span<const Variant> all_variants() noexcept { return kVariants; }

bool needs_sentence_repo(Variant v) noexcept {
  return v == Variant::StructuredRewritten || v == Variant::SentencePattern;
}
bool needs_paragraph_repo(Variant v) noexcept { return v == Variant::StructuredRewritten; }
bool needs_references(Variant v) noexcept {
  return v == Variant::TemplateOnly || v == Variant::DirectPrompt || v == Variant::ConvTransfer;
}

void TransferConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::ConfigError, "alpha must lie in [0, 1]");
  if (window_sentences < 1) throw Error(ErrorCode::ConfigError, "window_sentences must be >= 1");
  if (reference_k < 1) throw Error(ErrorCode::ConfigError, "reference_k must be >= 1");
  if (max_parallel_paragraphs < 1) {
    throw Error(ErrorCode::ConfigError, "max_parallel_paragraphs must be >= 1");
  }
  if (!(low_confidence_margin >= 0.0)) {
    throw Error(ErrorCode::ConfigError, "low_confidence_margin must be >= 0");
  }
}

std::string style_instruction(double alpha) {
  if (alpha <= 0.0) return "Keep the original wording unchanged.";
  if (alpha >= 1.0) {
    return "Maximally imitate the template: adopt its phrasing, sentence shape and discourse "
           "markers wherever the content allows.";
  }
  if (alpha >= 2.0 / 3.0) return "Strongly adopt the template's phrasing and structure.";
  if (alpha >= 1.0 / 3.0) {
    return "Moderately adopt the template's phrasing while staying close to the original wording.";
  }
  return "Make light stylistic adjustments toward the template and keep most of the original "
         "wording.";
}

std::size_t TransferTrace::record_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : paragraphs) n += p.records.size();
  return n;
}

ReferenceMaterial ReferenceMaterial::from_documents(std::span<const corpus::RawDocument> docs,
                                                    const corpus::SegmentationRules& rules) {
  ReferenceMaterial out;
  for (const auto& d : docs) {
    auto seg = corpus::segment(d, rules);
    for (const auto& p : seg.paragraphs) {
      for (const auto& s : p.sentences) out.sentences.push_back({s.sent_id, s.text});
    }
    if (!out.full_text.empty()) out.full_text += "\n\n";
    out.full_text += std::string(trim(d.body));
    out.documents.push_back(std::move(seg));
  }
  return out;
}

std::string generate_sentence(generation::GenerationBackend& backend,
                              const prompts::PromptLibrary& prompts,
                              const corpus::SentenceUnit& sentence,
                              const templates::SentenceTemplate& sentence_template,
                              const templates::ParagraphTemplate& paragraph_template,
                              const TransferConfig& cfg,
                              std::span<const std::string> window_context,
                              std::string* prompt_out) {
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "alpha must lie in [0, 1]");
  }
  Fields f = base_fields(sentence, cfg, window_context);
  add_sentence_template(f, sentence_template);
  add_paragraph_template(f, paragraph_template);
  auto g = generate_with(backend, prompts, to_string(Variant::StructuredRewritten), sentence, cfg,
                         std::move(f));
  if (prompt_out) *prompt_out = std::move(g.prompt);
  return g.text;
}

RefineOutcome refine_paragraph(generation::GenerationBackend& backend,
                               const prompts::PromptLibrary& prompts,
                               std::span<const std::string> drafts,
                               const templates::ParagraphTemplate& paragraph_template,
                               const TransferConfig& cfg) {
  if (drafts.empty()) throw Error(ErrorCode::EmptyList, "nothing to refine");
  RefineOutcome out;
  out.sentences.assign(drafts.begin(), drafts.end());
  if (cfg.alpha == 0.0) return out;

  Fields f = {{"drafts", join_lines(drafts)},
              {"alpha", format_number(cfg.alpha)},
              {"style_instruction", style_instruction(cfg.alpha)}};
  add_paragraph_template(f, paragraph_template);
  generation::GenerationRequest req{
      Stage::Refine, prompts.render(to_string(Variant::StructuredRewritten), Stage::Refine, f), f};
  out.prompt = req.prompt;

  const auto n = static_cast<long>(drafts.size());
  for (int attempt = 0; attempt < 2; ++attempt) {
    ++out.attempts;
    try {
      out.raw = generation::call(backend, req);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::BackendUnavailable) throw;
      spdlog::warn("refinement skipped: {}", e.what());
      out.skipped = true;
      return out;
    }
    auto lines = reply_lines(out.raw);
    if (std::abs(static_cast<long>(lines.size()) - n) <= 1 && !lines.empty()) {
      out.sentences = std::move(lines);
      return out;
    }
  }
  spdlog::warn("refinement returned the wrong sentence count twice; keeping drafts");
  out.skipped = true;
  return out;
}

StylizedDocument transfer_document(const corpus::SegmentedDocument& source,
                                   const TransferResources& resources, const TransferConfig& cfg,
                                   std::span<const ParagraphResult> resume,
                                   const ParagraphSink& sink) {
  cfg.validate();
  validate_resources(resources, cfg);

  StylizedDocument doc;
  doc.doc_id = source.doc_id;
  doc.variant = cfg.variant;
  doc.trace.doc_id = source.doc_id;
  doc.trace.variant = cfg.variant;
  doc.trace.alpha = cfg.alpha;
  doc.trace.generation_backend = resources.generator->spec().backend_id;
  doc.trace.generation_model = resources.generator->spec().model_name;
  if (resources.embedder) doc.trace.embedding_backend = resources.embedder->spec().backend_id;

  if (cfg.variant == Variant::DirectPrompt) return direct_prompt(source, resources, cfg, doc);

  if (resume.size() > source.paragraphs.size()) {
    throw Error(ErrorCode::InvalidArgument, "checkpoint has more paragraphs than the source");
  }
  for (std::size_t i = 0; i < resume.size(); ++i) {
    if (resume[i].output.para_id != source.paragraphs[i].para_id) {
      throw Error(ErrorCode::InvalidArgument, "checkpoint does not match the source document");
    }
  }

  Engine engine(source, resources, cfg);
  std::vector<ParagraphResult> results(resume.begin(), resume.end());
  const std::size_t n = source.paragraphs.size();
  for (std::size_t i = resume.size(); i < n; i += cfg.max_parallel_paragraphs) {
    const std::size_t end = std::min(n, i + cfg.max_parallel_paragraphs);
    if (end - i == 1) {
      results.push_back(engine.run(i));
      if (sink) sink(i, results.back());
      continue;
    }
    std::vector<std::future<ParagraphResult>> batch;
    for (std::size_t j = i; j < end; ++j) {
      batch.push_back(std::async(std::launch::async, [&engine, j] { return engine.run(j); }));
    }
    for (std::size_t j = i; j < end; ++j) {
      results.push_back(batch[j - i].get());
      if (sink) sink(j, results.back());
    }
  }

  doc.leading = source.leading;
  doc.text = source.leading;
  for (auto& r : results) {
    doc.text += r.output.text;
    doc.text += r.output.separator_after;
    doc.paragraphs.push_back(std::move(r.output));
    doc.trace.paragraphs.push_back(std::move(r.trace));
  }
  return doc;
}

StylizedDocument run_variant(Variant variant, const corpus::SegmentedDocument& source,
                             const TransferResources& resources, TransferConfig cfg,
                             std::span<const ParagraphResult> resume, const ParagraphSink& sink) {
  cfg.variant = variant;
  return transfer_document(source, resources, cfg, resume, sink);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

template <typename T>
nlohmann::json opt(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <typename T>
std::optional<T> opt_from(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

nlohmann::json to_json(const ParagraphTrace& p) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : p.records) {
    records.push_back({{"sent_id", r.sent_id},
                       {"window", r.window},
                       {"sentence_template_id", opt(r.sentence_template_id)},
                       {"match_score", opt(r.match_score)},
                       {"match_margin", opt(r.match_margin)},
                       {"low_confidence", r.low_confidence},
                       {"paragraph_template_id", opt(r.paragraph_template_id)},
                       {"prompt", r.prompt},
                       {"raw_generation", r.raw_generation},
                       {"refined_text", r.refined_text}});
  }
  nlohmann::json windows = nlohmann::json::array();
  for (const auto& w : p.windows) {
    nlohmann::json calls = nlohmann::json::array();
    for (const auto& c : w.calls) {
      calls.push_back({{"stage", c.stage}, {"prompt", c.prompt}, {"raw", c.raw}});
    }
    windows.push_back({{"first_sentence", w.first_sentence},
                       {"size", w.size},
                       {"calls", calls},
                       {"refinement_skipped", w.refinement_skipped},
                       {"alignment_failed", w.alignment_failed},
                       {"refine_attempts", w.refine_attempts}});
  }
  nlohmann::json j = {{"para_id", p.para_id},
                      {"paragraph_template_id", opt(p.paragraph_template_id)},
                      {"paragraph_distance", opt(p.paragraph_distance)},
                      {"records", records},
                      {"windows", windows},
                      {"window_splits", p.window_splits}};
  if (p.elapsed_ms) j["elapsed_ms"] = *p.elapsed_ms;
  return j;
}

ParagraphTrace paragraph_trace_from_json(const nlohmann::json& j) {
  ParagraphTrace p;
  p.para_id = j.at("para_id").get<std::string>();
  p.paragraph_template_id = opt_from<int>(j, "paragraph_template_id");
  p.paragraph_distance = opt_from<double>(j, "paragraph_distance");
  p.window_splits = j.at("window_splits").get<std::size_t>();
  p.elapsed_ms = opt_from<double>(j, "elapsed_ms");
  for (const auto& r : j.at("records")) {
    TraceRecord rec;
    rec.sent_id = r.at("sent_id").get<std::string>();
    rec.window = r.at("window").get<std::size_t>();
    rec.sentence_template_id = opt_from<int>(r, "sentence_template_id");
    rec.match_score = opt_from<double>(r, "match_score");
    rec.match_margin = opt_from<double>(r, "match_margin");
    rec.low_confidence = r.at("low_confidence").get<bool>();
    rec.paragraph_template_id = opt_from<int>(r, "paragraph_template_id");
    rec.prompt = r.at("prompt").get<std::string>();
    rec.raw_generation = r.at("raw_generation").get<std::string>();
    rec.refined_text = r.at("refined_text").get<std::string>();
    p.records.push_back(std::move(rec));
  }
  for (const auto& w : j.at("windows")) {
    WindowTrace wt;
    wt.first_sentence = w.at("first_sentence").get<std::size_t>();
    wt.size = w.at("size").get<std::size_t>();
    wt.refinement_skipped = w.at("refinement_skipped").get<bool>();
    wt.alignment_failed = w.at("alignment_failed").get<bool>();
    wt.refine_attempts = w.at("refine_attempts").get<int>();
    for (const auto& c : w.at("calls")) {
      wt.calls.push_back({c.at("stage").get<std::string>(), c.at("prompt").get<std::string>(),
                          c.at("raw").get<std::string>()});
    }
    p.windows.push_back(std::move(wt));
  }
  return p;
}

}  // namespace

nlohmann::json to_json(const TransferTrace& trace) {
  nlohmann::json paras = nlohmann::json::array();
  for (const auto& p : trace.paragraphs) paras.push_back(to_json(p));
  nlohmann::json j = {{"doc_id", trace.doc_id},
                      {"variant", to_string(trace.variant)},
                      {"alpha", trace.alpha},
                      {"generation_backend", trace.generation_backend},
                      {"generation_model", trace.generation_model},
                      {"embedding_backend", trace.embedding_backend},
                      {"structure_exempt", trace.structure_exempt},
                      {"record_count", trace.record_count()},
                      {"paragraphs", paras}};
  if (trace.structure_exempt) {
    j["document_prompt"] = trace.document_prompt;
    j["document_generation"] = trace.document_generation;
  }
  return j;
}

nlohmann::json to_json(const ParagraphResult& result) {
  return {{"para_id", result.output.para_id},
          {"sentences", result.output.sentences},
          {"text", result.output.text},
          {"separator_after", result.output.separator_after},
          {"trace", to_json(result.trace)}};
}

ParagraphResult paragraph_result_from_json(const nlohmann::json& j) {
  try {
    ParagraphResult r;
    r.output.para_id = j.at("para_id").get<std::string>();
    r.output.sentences = j.at("sentences").get<std::vector<std::string>>();
    r.output.text = j.at("text").get<std::string>();
    r.output.separator_after = j.at("separator_after").get<std::string>();
    r.trace = paragraph_trace_from_json(j.at("trace"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("bad checkpoint entry: ") + e.what());
  }
}

}  // namespace zerostylus::transfer
