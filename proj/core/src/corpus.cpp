#include "zerostylus/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>

#include <spdlog/spdlog.h>

#include "zerostylus/error.hpp"
#include "zerostylus/util.hpp"

namespace zerostylus::corpus {

namespace {

bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }

std::size_t skip_space(std::string_view s, std::size_t i) {
  while (i < s.size() && is_space(s[i])) ++i;
  return i;
}

// Start of the whitespace-delimited token that ends at `end`.
std::size_t token_start(std::string_view s, std::size_t end) {
  std::size_t b = end;
  while (b > 0 && !is_space(s[b - 1])) --b;
  return b;
}

void split_sentences(std::string_view body, std::size_t para_begin, std::size_t para_end,
                     const SegmentationRules& rules, Paragraph& para) {
  const std::string_view text = body.substr(para_begin, para_end - para_begin);
  std::size_t start = 0;
  int ordinal = 0;
  auto emit = [&](std::size_t end, std::size_t next) {
    SentenceUnit unit;
    unit.sent_id = para.para_id + ".s" + std::to_string(ordinal++);
    unit.text = std::string(text.substr(start, end - start));
    unit.begin = para_begin + start;
    unit.end = para_begin + end;
    unit.separator_after = std::string(text.substr(end, next - end));
    para.sentences.push_back(std::move(unit));
    start = next;
  };

  for (std::size_t i = 0; i + 1 < text.size(); ++i) {
    if (!is_terminal(text[i]) || !is_space(text[i + 1])) continue;
    const std::size_t end = i + 1;
    const std::string_view token = text.substr(token_start(text, end), end - token_start(text, end));
    if (std::find(rules.abbreviations.begin(), rules.abbreviations.end(), token) !=
        rules.abbreviations.end()) {
      continue;
    }
    if (rules.accept_boundary && !rules.accept_boundary(text, end)) continue;
    const std::size_t next = skip_space(text, end);
    if (next >= text.size()) break;
    emit(end, next);
    i = next - 1;
  }
  emit(text.size(), text.size());
}

}  // namespace

std::string Paragraph::text() const {
  std::string out;
  for (const auto& s : sentences) {
    out += s.text;
    out += s.separator_after;
  }
  return out;
}

std::string SegmentedDocument::reassemble() const {
  std::string out = leading;
  for (const auto& p : paragraphs) {
    out += p.text();
    out += p.separator_after;
  }
  return out;
}

std::size_t SegmentedDocument::sentence_count() const {
  std::size_t n = 0;
  for (const auto& p : paragraphs) n += p.sentences.size();
  return n;
}

SegmentedDocument segment(const RawDocument& doc, const SegmentationRules& rules) {
  const std::string_view body = doc.body;
  std::size_t pos = skip_space(body, 0);
  if (pos == body.size()) {
    throw Error(ErrorCode::EmptyDocument, "document '" + doc.doc_id + "' has no content");
  }

  SegmentedDocument out;
  out.doc_id = doc.doc_id;
  out.leading = std::string(body.substr(0, pos));

  int ordinal = 0;
  while (pos < body.size()) {
    // Paragraph ends at the first whitespace run holding two or more newlines.
    std::size_t scan = pos;
    std::size_t para_end = body.size();
    std::size_t sep_end = body.size();
    while (scan < body.size()) {
      if (!is_space(body[scan])) {
        ++scan;
        continue;
      }
      const std::size_t run_begin = scan;
      int newlines = 0;
      while (scan < body.size() && is_space(body[scan])) {
        if (body[scan] == '\n') ++newlines;
        ++scan;
      }
      if (newlines >= 2 || scan == body.size()) {
        para_end = run_begin;
        sep_end = scan;
        break;
      }
    }

    Paragraph para;
    para.para_id = doc.doc_id + "#p" + std::to_string(ordinal++);
    split_sentences(body, pos, para_end, rules, para);
    para.separator_after = std::string(body.substr(para_end, sep_end - para_end));
    out.paragraphs.push_back(std::move(para));
    pos = sep_end;
  }
  return out;
}

nlohmann::json to_json(const SegmentedDocument& doc) {
  nlohmann::json paras = nlohmann::json::array();
  for (const auto& p : doc.paragraphs) {
    nlohmann::json sents = nlohmann::json::array();
    for (const auto& s : p.sentences) {
      sents.push_back({{"sent_id", s.sent_id},
                       {"text", s.text},
                       {"span", {s.begin, s.end}},
                       {"separator_after", s.separator_after}});
    }
    paras.push_back(
        {{"para_id", p.para_id}, {"sentences", sents}, {"separator_after", p.separator_after}});
  }
  return {{"doc_id", doc.doc_id}, {"leading", doc.leading}, {"paragraphs", paras}};
}

RawDocument document_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "document must be a JSON object");
  RawDocument doc;
  try {
    doc.doc_id = j.at("doc_id").get<std::string>();
    if (auto it = j.find("author_id"); it != j.end() && !it->is_null()) {
      doc.author_id = it->get<std::string>();
    }
    if (auto it = j.find("title"); it != j.end() && !it->is_null()) doc.title = it->get<std::string>();
    doc.body = j.at("body").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed document: ") + e.what());
  }
  if (doc.doc_id.empty()) throw Error(ErrorCode::InvalidArgument, "empty doc_id");
  if (trim(doc.body).empty()) {
    throw Error(ErrorCode::EmptyDocument, "document '" + doc.doc_id + "' has an empty body");
  }
  return doc;
}

nlohmann::json to_json(const RawDocument& doc) {
  nlohmann::json j = {{"doc_id", doc.doc_id}, {"title", doc.title}, {"body", doc.body}};
  j["author_id"] = doc.author_id ? nlohmann::json(*doc.author_id) : nlohmann::json(nullptr);
  return j;
}

std::vector<RawDocument> parse_corpus(std::string_view jsonl) {
  std::vector<RawDocument> docs;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  while (!jsonl.empty()) {
    const auto nl = jsonl.find('\n');
    const std::string_view line = jsonl.substr(0, nl);
    jsonl = nl == std::string_view::npos ? std::string_view{} : jsonl.substr(nl + 1);
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::InvalidArgument,
                  "corpus line " + std::to_string(line_no) + ": " + e.what());
    }
    auto doc = document_from_json(j);
    if (!seen.insert(doc.doc_id).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate doc_id '" + doc.doc_id + "'");
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<RawDocument> load_corpus(const std::filesystem::path& path) {
  return parse_corpus(read_file(path));
}

std::string to_jsonl(std::span<const RawDocument> docs) {
  std::string out;
  for (const auto& d : docs) {
    out += to_json(d).dump();
    out += '\n';
  }
  return out;
}

namespace {

struct SubsetChoice {
  std::vector<const RawDocument*> docs;
  std::size_t total = 0;
  double gap = std::numeric_limits<double>::infinity();
};

// Exhaustive search over k-subsets in lexicographic doc_id order; the first
// subset reaching the smallest gap wins.
SubsetChoice best_subset(const std::vector<const RawDocument*>& docs, std::size_t k,
                         double target) {
  std::vector<std::size_t> lengths;
  lengths.reserve(docs.size());
  for (const auto* d : docs) lengths.push_back(char_length(d->body));

  SubsetChoice best;
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  while (true) {
    std::size_t total = 0;
    for (auto i : idx) total += lengths[i];
    const double gap = std::abs(static_cast<double>(total) - target);
    if (gap < best.gap) {
      best.gap = gap;
      best.total = total;
      best.docs.clear();
      for (auto i : idx) best.docs.push_back(docs[i]);
    }
    // advance to the next combination
    std::size_t pos = k;
    while (pos > 0 && idx[pos - 1] == docs.size() - k + pos - 1) --pos;
    if (pos == 0) break;
    ++idx[pos - 1];
    for (std::size_t j = pos; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  return best;
}

}  // namespace

ReferenceSample sample_reference_set(std::span<const RawDocument> corpus,
                                     const RawDocument& source, int n_exp, double sigma,
                                     std::uint64_t rng_seed) {
  if (n_exp < 1 || n_exp > 5) {
    throw Error(ErrorCode::InvalidArgument, "n_exp must lie in [1, 5]");
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw Error(ErrorCode::InvalidArgument, "sigma must be positive");
  }

  std::map<std::string, std::vector<const RawDocument*>> by_author;
  for (const auto& d : corpus) {
    if (!d.author_id || d.author_id->empty() || d.doc_id == source.doc_id) continue;
    by_author[*d.author_id].push_back(&d);
  }

  const auto k = static_cast<std::size_t>(n_exp);
  const double target = sigma * static_cast<double>(char_length(source.body));

  struct Candidate {
    std::string author;
    SubsetChoice choice;
  };
  std::vector<Candidate> eligible;
  for (auto& [author, docs] : by_author) {
    if (docs.size() < k) continue;
    std::sort(docs.begin(), docs.end(),
              [](const RawDocument* a, const RawDocument* b) { return a->doc_id < b->doc_id; });
    eligible.push_back({author, best_subset(docs, k, target)});
  }
  if (eligible.empty()) {
    throw Error(ErrorCode::NoEligibleAuthor,
                "no author has " + std::to_string(n_exp) + " documents besides the source");
  }

  std::vector<const Candidate*> feasible;
  for (const auto& c : eligible) {
    if (c.choice.gap <= kLengthTolerance * target) feasible.push_back(&c);
  }
  const bool within = !feasible.empty();
  if (!within) {
    for (const auto& c : eligible) feasible.push_back(&c);
  }

  // mt19937_64 output is fully specified, so the draw is portable.
  std::mt19937_64 rng(rng_seed);
  const Candidate& pick = *feasible[rng() % feasible.size()];

  ReferenceSample out;
  out.author_id = pick.author;
  out.total_chars = pick.choice.total;
  out.target_chars = target;
  out.within_tolerance = within;
  for (const auto* d : pick.choice.docs) out.documents.push_back(*d);
  if (!within) {
    spdlog::warn("reference sample for '{}' totals {} chars, outside +-20% of target {:.0f}",
                 source.doc_id, out.total_chars, target);
  }
  return out;
}

}  // namespace zerostylus::corpus
