#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "fakes.hpp"
#include "oracles.hpp"
#include "zerostylus/corpus.hpp"
#include "zerostylus/error.hpp"
#include "zerostylus/templates.hpp"
#include "zerostylus/util.hpp"

using namespace zerostylus;
using namespace zerostylus::templates;
using fakes::vec;

namespace {

std::vector<SentenceInput> inputs(const std::vector<std::vector<double>>& pts) {
  std::vector<SentenceInput> out;
  for (std::size_t i = 0; i < pts.size(); ++i)
    out.push_back({"s" + std::to_string(i), "Sentence number " + std::to_string(i) + ".", vec(pts[i])});
  return out;
}

corpus::Paragraph paragraph(const std::string& id, std::size_t sentences) {
  std::string body;
  for (std::size_t i = 0; i < sentences; ++i) body += (i ? " " : "") + std::string("Word ") + std::to_string(i) + ".";
  auto seg = corpus::segment({id, {}, "", body});
  auto p = seg.paragraphs.front();
  p.para_id = id;
  return p;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::InvalidArgument;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("zs-templates-" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_SUITE("templates") {

TEST_CASE("dense triple plus an outlier") {
  auto in = inputs({{0, 0}, {0, 0.1}, {0.1, 0}, {10, 10}});
  auto build = build_sentence_repo(in, {0.5, 2});
  REQUIRE(build.repo.templates.size() == 2);
  CHECK(build.repo.templates[0].member_count == 3);
  CHECK(build.repo.templates[1].member_count == 1);
  CHECK(build.repo.templates[1].centroid == vec({10, 10}));
  CHECK(build.labels == std::vector<int>{0, 0, 0, -1});
  CHECK(build.template_of == std::vector<int>{0, 0, 0, 1});
  CHECK(build.cluster_count == 1);
  CHECK(build.noise_count == 1);
  CHECK(build.repo.eps == 0.5);
  CHECK(build.repo.min_pts == 2);
}

TEST_CASE("medoid is the member nearest the centroid") {
  auto in = inputs({{0, 0}, {0.2, 0}, {0.1, 0}});
  auto build = build_sentence_repo(in, {1.0, 2});
  REQUIRE(build.repo.templates.size() == 1);
  CHECK(build.repo.templates[0].medoid_sent_id == "s2");
  CHECK(build.repo.templates[0].medoid_text == "Sentence number 2.");
}

TEST_CASE("single sentence is a singleton template") {
  auto in = inputs({{0.3, 0.4}});
  auto build = build_sentence_repo(in, {});
  REQUIRE(build.repo.templates.size() == 1);
  CHECK(build.repo.templates[0].centroid == in[0].embedding);
  CHECK(build.repo.templates[0].member_count == 1);
}

TEST_CASE("identical embeddings collapse into one template") {
  std::vector<std::vector<double>> pts(5, {0.6, 0.8});
  for (std::size_t min_pts : {1u, 3u, 5u, 7u}) {
    auto build = build_sentence_repo(inputs(pts), {0.1, min_pts});
    REQUIRE(build.repo.templates.size() == 1);
    CHECK(build.repo.templates[0].member_count == 5);
  }
}

TEST_CASE("border point joins its nearest core regardless of order") {
  // the border at 1.0 reaches the core at 0 (distance 1.0) and the core at
  // 2.05 (distance 1.05) of two separate clusters
  std::vector<std::vector<double>> pts = {{2.05}, {2.15}, {2.25}, {2.35}, {1.0},
                                          {-0.3}, {-0.2}, {-0.1}, {0}};
  std::vector<embedding::Embedding> es;
  for (const auto& p : pts) es.push_back(vec(p));
  auto labels = dbscan(es, 1.08, 4);
  CHECK(labels == oracle::dbscan(pts, 1.08, 4));
  CHECK(labels[4] == labels[8]);
  CHECK(labels[0] != labels[8]);
  std::reverse(es.begin(), es.end());
  auto reversed = dbscan(es, 1.08, 4);
  CHECK(reversed[4] == reversed[0]);
}

TEST_CASE("dbscan agrees with the brute-force oracle on random inputs") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 10;
    std::vector<std::vector<double>> pts(n, std::vector<double>(2));
    std::vector<embedding::Embedding> es;
    for (auto& p : pts) {
      p = {u(rng), u(rng)};
      es.push_back(vec(p));
    }
    const double eps = 0.3 + u(rng) / 2;
    const std::size_t min_pts = 1 + rng() % 4;
    CHECK(dbscan(es, eps, min_pts) == oracle::dbscan(pts, eps, min_pts));
  }
}

TEST_CASE("k-distance heuristic") {
  std::vector<embedding::Embedding> es = {vec({0}), vec({1}), vec({3})};
  // 1st-nearest distances are 1, 1, 2; the 90th percentile is 2
  CHECK(k_distance_eps(es, 1) == doctest::Approx(2.0));
  auto build = build_sentence_repo(inputs({{0}, {1}, {3}}), {std::nullopt, 2});
  CHECK(build.repo.eps > 0.0);
}

TEST_CASE("template ids are ordered by size then first sentence id") {
  auto in = inputs({{10, 10}, {0, 0}, {0, 0.1}, {5, 5}, {5, 5.1}, {5.1, 5}});
  auto build = build_sentence_repo(in, {0.5, 2});
  REQUIRE(build.repo.templates.size() == 3);
  CHECK(build.repo.templates[0].member_count == 3);  // {s3,s4,s5}
  CHECK(build.repo.templates[1].member_count == 2);  // {s1,s2}
  CHECK(build.repo.templates[2].medoid_sent_id == "s0");
}

TEST_CASE("build rejects mixed spaces and empty input") {
  std::vector<SentenceInput> mixed = {{"a", "A.", vec({1, 0})}, {"b", "B.", vec({1, 0}, "other")}};
  CHECK(code_of([&] { build_sentence_repo(mixed, {}); }) == ErrorCode::BackendMismatch);
  CHECK(code_of([&] { build_sentence_repo(std::span<const SentenceInput>{}, {}); }) == ErrorCode::EmptyList);
}

TEST_CASE("mock abstraction") {
  generation::MockGenerationBackend gen;
  auto lib = prompts::PromptLibrary::defaults();
  SentenceTemplate t{0, vec({1}), "We propose a novel framework.", "x", 1, std::nullopt};
  CHECK(abstract_template(gen, lib, t).abstracted_pattern == std::optional<std::string>("We {SLOT} a {SLOT} {SLOT}."));
  t.medoid_text = "A b c.";
  CHECK(abstract_template(gen, lib, t).abstracted_pattern == std::optional<std::string>("A b c."));
}

TEST_CASE("abstraction failure leaves the template unabstracted") {
  fakes::ScriptedGenerator gen(fakes::always_unavailable());
  SentenceTemplate t{0, vec({1}), "We propose a novel framework.", "x", 1, std::nullopt};
  auto out = abstract_template(gen, prompts::PromptLibrary::defaults(), t);
  CHECK_FALSE(out.abstracted_pattern.has_value());
  CHECK(out.prompt_text() == "We propose a novel framework.");
}

TEST_CASE("paragraph insertion threshold") {
  ParagraphRepo repo;
  repo.epsilon = 0.2;
  repo.backend_id = "test";
  auto p = paragraph("p0", 1);
  std::vector<int> m = {0};

  auto first = insert_paragraph(repo, p, vec({0, 0}), m);
  CHECK(first.inserted);
  CHECK(first.repo.templates.size() == 1);

  auto near = insert_paragraph(first.repo, paragraph("p1", 1), vec({0.1, 0}), m);
  CHECK_FALSE(near.inserted);
  CHECK(near.repo.templates.size() == 1);
  CHECK(near.repo.templates[0].member_count == 2);
  CHECK(near.template_id == 0);

  auto far = insert_paragraph(first.repo, paragraph("p2", 1), vec({1, 0}), m);
  CHECK(far.inserted);
  CHECK(far.template_id == 1);
  CHECK(far.repo.templates[1].exemplar_para_id == "p2");

  // the distance equal to epsilon is not "farther than"
  auto edge = insert_paragraph(first.repo, paragraph("p3", 1), vec({0.2, 0}), m);
  CHECK_FALSE(edge.inserted);
}

TEST_CASE("insertion guards") {
  ParagraphRepo repo;
  repo.epsilon = 0.2;
  repo.backend_id = "test";
  auto p = paragraph("p0", 2);
  std::vector<int> wrong = {0};
  CHECK(code_of([&] { insert_paragraph(repo, p, vec({0, 0}), wrong); }) == ErrorCode::InvalidArgument);
  std::vector<int> ok = {0, 1};
  CHECK(code_of([&] { insert_paragraph(repo, p, vec({0, 0}, "x"), ok); }) == ErrorCode::BackendMismatch);
  repo.epsilon = 0;
  CHECK(code_of([&] { insert_paragraph(repo, p, vec({0, 0}), ok); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("default epsilon is half the median pairwise distance") {
  std::vector<embedding::Embedding> es = {vec({0}), vec({1}), vec({3})};
  // distances 1, 2, 3 -> median 2
  CHECK(default_epsilon(es) == doctest::Approx(1.0));
  std::vector<embedding::Embedding> one = {vec({0})};
  CHECK(default_epsilon(one) == doctest::Approx(0.5));
}

TEST_CASE("repositories round-trip through files") {
  TempDir dir;
  auto build = build_sentence_repo(inputs({{0.1, 0.7}, {0.1, 0.70001}, {0.9, -1.0 / 3.0}}), {0.01, 2});
  build.repo.templates[0].abstracted_pattern = "The {SLOT}.";
  save_repo(build.repo, dir.path / "s.json");
  CHECK(load_sentence_repo(dir.path / "s.json") == build.repo);

  ParagraphRepo p;
  p.epsilon = 0.25;
  p.backend_id = "test";
  std::vector<int> m = {1};
  p = insert_paragraph(p, paragraph("a", 1), vec({1.0 / 7.0, 0}), m).repo;
  p = insert_paragraph(p, paragraph("b", 1), vec({0, 2.0 / 3.0}), m).repo;
  save_repo(p, dir.path / "p.json");
  CHECK(load_paragraph_repo(dir.path / "p.json") == p);
}

TEST_CASE("repository loading rejects bad files") {
  TempDir dir;
  ParagraphRepo p;
  p.epsilon = 0.25;
  p.backend_id = "test";
  std::vector<int> m = {0};
  p = insert_paragraph(p, paragraph("a", 1), vec({0, 0}), m).repo;
  p = insert_paragraph(p, paragraph("b", 1), vec({1, 0}), m).repo;
  auto j = to_json(p);

  auto write = [&](const nlohmann::json& doc) {
    write_file_atomic(dir.path / "p.json", doc.dump());
    return dir.path / "p.json";
  };

  auto bad_version = j;
  bad_version["format_version"] = 2;
  CHECK(code_of([&] { load_paragraph_repo(write(bad_version)); }) == ErrorCode::VersionMismatch);

  CHECK(code_of([&] { load_paragraph_repo(write(j), std::string("other")); }) == ErrorCode::BackendMismatch);

  auto too_close = j;
  too_close["templates"][1]["vector"] = {0.1, 0};
  CHECK(code_of([&] { load_paragraph_repo(write(too_close)); }) == ErrorCode::CorruptFile);

  auto missing = j;
  missing["templates"][0].erase("vector");
  CHECK(code_of([&] { load_paragraph_repo(write(missing)); }) == ErrorCode::CorruptFile);

  auto wrong_dim = j;
  wrong_dim["templates"][0]["vector"] = {0, 0, 0};
  CHECK(code_of([&] { load_paragraph_repo(write(wrong_dim)); }) == ErrorCode::CorruptFile);

  write_file_atomic(dir.path / "p.json", "{\"format_version\": 1, ");
  CHECK(code_of([&] { load_paragraph_repo(dir.path / "p.json"); }) == ErrorCode::CorruptFile);

  // a sentence repo is not a paragraph repo
  auto s = build_sentence_repo(inputs({{0, 1}}), {});
  save_repo(s.repo, dir.path / "s.json");
  CHECK(code_of([&] { load_paragraph_repo(dir.path / "s.json"); }) == ErrorCode::CorruptFile);
}

}  // TEST_SUITE
