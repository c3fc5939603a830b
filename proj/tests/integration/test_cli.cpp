#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <map>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

#include "zerostylus/util.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

/// Runs the CLI inside `dir` with stderr discarded.
Result run_cli(const fs::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" + ZEROSTYLUS_CLI + "' " + args + " 2>/dev/null";
  Result r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() / ("zs-cli-" + std::to_string(std::random_device{}()));
    fs::create_directories(dir / "data");
    for (const char* f : {"corpus.jsonl", "source.jsonl", "source.txt"})
      fs::copy_file(fs::path(ZEROSTYLUS_FIXTURES) / f, dir / "data" / f);
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string read(const std::string& rel) const { return zerostylus::read_file(dir / rel); }
  bool exists(const std::string& rel) const { return fs::exists(dir / rel); }
};

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = zerostylus::read_file(e.path());
  return files;
}

/// Transfer outputs must match except for the output path in the config echo.
void check_same_transfer(const Workspace& w, const std::string& a, const std::string& b) {
  CHECK(w.read(a + "/stylized.jsonl") == w.read(b + "/stylized.jsonl"));
  CHECK(w.read(a + "/documents.jsonl") == w.read(b + "/documents.jsonl"));
  auto ta = nlohmann::json::parse(w.read(a + "/trace.json"));
  auto tb = nlohmann::json::parse(w.read(b + "/trace.json"));
  CHECK(ta["config"]["paths"]["output"] == a);
  CHECK(tb["config"]["paths"]["output"] == b);
  tb["config"]["paths"]["output"] = a;
  CHECK(ta == tb);
}

}  // namespace

TEST_SUITE("cli-integration") {

TEST_CASE("acquire writes both repositories and reruns identically") {
  Workspace a, b;
  for (auto* w : {&a, &b}) {
    auto r = run_cli(w->dir, "acquire --corpus data/corpus.jsonl --source data/source.jsonl --out repos");
    REQUIRE(r.code == 0);
  }
  CHECK(a.exists("repos/sentence_repo.json"));
  CHECK(a.exists("repos/paragraph_repo.json"));
  auto s = nlohmann::json::parse(a.read("repos/sentence_repo.json"));
  CHECK_FALSE(s["templates"].empty());
  CHECK(snapshot(a.dir / "repos") == snapshot(b.dir / "repos"));

  auto summary = nlohmann::json::parse(a.read("repos/acquisition.json"));
  CHECK(summary.contains("config"));
  CHECK(summary.contains("summary"));
}

TEST_CASE("single-document corpus") {
  Workspace w;
  auto first = nlohmann::json::parse(w.read("data/corpus.jsonl").substr(0, w.read("data/corpus.jsonl").find('\n')));
  zerostylus::write_file_atomic(w.dir / "data/one.jsonl", first.dump() + "\n");
  CHECK(run_cli(w.dir, "acquire --corpus data/one.jsonl --out repos").code == 0);
  CHECK(w.exists("repos/sentence_repo.json"));
  CHECK(w.exists("repos/paragraph_repo.json"));
}

TEST_CASE("unreadable corpus exits 2 without partial files") {
  Workspace w;
  auto r = run_cli(w.dir, "--error-json acquire --corpus data/missing.jsonl --out repos");
  CHECK(r.code == 2);
  CHECK_FALSE(w.exists("repos"));
  auto err = nlohmann::json::parse(r.out);
  CHECK(err["error"]["exit_code"] == 2);
}

TEST_CASE("alpha zero transfer reproduces the source") {
  Workspace w;
  REQUIRE(run_cli(w.dir, "acquire --corpus data/corpus.jsonl --out repos").code == 0);
  REQUIRE(run_cli(w.dir, "--alpha 0 transfer --source data/source.txt --repos repos --out out").code == 0);
  auto doc = nlohmann::json::parse(w.read("out/documents.jsonl"));
  CHECK(doc["text"] == w.read("data/source.txt"));
  CHECK(w.exists("out/stylized.jsonl"));
  CHECK(w.exists("out/trace.json"));
}

TEST_CASE("direct prompt needs no repositories") {
  Workspace w;
  auto r = run_cli(w.dir, "--variant DirectPrompt transfer --source data/source.jsonl --references data/corpus.jsonl --out out");
  CHECK(r.code == 0);
  auto doc = nlohmann::json::parse(w.read("out/documents.jsonl"));
  CHECK(doc["text"].get<std::string>().rfind("[DIRECT] ", 0) == 0);
}

TEST_CASE("resumed transfer equals an uninterrupted one") {
  Workspace w;
  REQUIRE(run_cli(w.dir, "acquire --corpus data/corpus.jsonl --out repos").code == 0);
  REQUIRE(run_cli(w.dir, "--alpha 0.7 transfer --source data/source.jsonl --repos repos --out full").code == 0);

  auto stopped = run_cli(w.dir, "--alpha 0.7 transfer --source data/source.jsonl --repos repos --out part "
                                "--checkpoint ck.jsonl --stop-after 1");
  CHECK(stopped.code != 0);
  CHECK_FALSE(w.exists("part"));
  REQUIRE(w.exists("ck.jsonl"));

  // a torn final line from a crash is ignored
  {
    std::string ck = w.read("ck.jsonl");
    zerostylus::write_file_atomic(w.dir / "ck.jsonl", ck + "{\"doc_id\":\"src-1\",\"ind");
  }
  auto resumed = run_cli(w.dir, "--alpha 0.7 transfer --source data/source.jsonl --repos repos --out part "
                                "--checkpoint ck.jsonl --resume");
  REQUIRE(resumed.code == 0);
  check_same_transfer(w, "full", "part");

  // a checkpoint from different settings is refused
  auto mismatch = run_cli(w.dir, "--alpha 0.2 transfer --source data/source.jsonl --repos repos --out other "
                                 "--checkpoint ck.jsonl --resume");
  CHECK(mismatch.code == 2);
}

TEST_CASE("repository built with another embedder exits 4") {
  Workspace w;
  REQUIRE(run_cli(w.dir, "acquire --corpus data/corpus.jsonl --out repos").code == 0);
  auto r = run_cli(w.dir, "--set embedding.backend_id=other-embedder transfer --source data/source.jsonl "
                          "--repos repos --out out");
  CHECK(r.code == 4);
  CHECK_FALSE(w.exists("out"));
}

TEST_CASE("locked output directory exits 2") {
  Workspace w;
  fs::create_directories(w.dir / "out");
  zerostylus::write_file_atomic(w.dir / "out/.zerostylus.lock", "1");
  auto r = run_cli(w.dir, "--variant DirectPrompt transfer --source data/source.jsonl --references data/corpus.jsonl --out out");
  CHECK(r.code == 2);
}

TEST_CASE("evaluation arity and determinism") {
  Workspace w;
  REQUIRE(run_cli(w.dir, "acquire --corpus data/corpus.jsonl --out repos").code == 0);
  REQUIRE(run_cli(w.dir, "--alpha 0 transfer --source data/source.jsonl --repos repos --out ident").code == 0);
  REQUIRE(run_cli(w.dir, "--alpha 0.9 transfer --source data/source.jsonl --repos repos --out styl").code == 0);
  REQUIRE(run_cli(w.dir, "--alpha 0.9 --variant SentencePattern transfer --source data/source.jsonl --repos repos --out pat").code == 0);

  auto r1 = run_cli(w.dir, "evaluate --source data/source.jsonl --repos repos --out rep1 --csv ident styl pat");
  REQUIRE(r1.code == 0);
  CHECK(r1.out.rfind("Method,X,Y,Z,Average", 0) == 0);
  REQUIRE(run_cli(w.dir, "evaluate --source data/source.jsonl --repos repos --out rep2 --csv ident styl pat").code == 0);
  auto rep1 = nlohmann::json::parse(w.read("rep1/report.json"));
  auto rep2 = nlohmann::json::parse(w.read("rep2/report.json"));
  CHECK(rep1["report"] == rep2["report"]);
  CHECK(rep1["outputs"] == rep2["outputs"]);
  rep2["config"]["paths"]["output"] = "rep1";
  CHECK(rep1 == rep2);
  CHECK(w.read("rep1/report.csv") == w.read("rep2/report.csv"));

  // identity output (labelled by its variant, listed first) has the best
  // content preservation in the cohort
  const auto& report = rep1["report"];
  double ident_y = -1, best_other = -1;
  for (const auto& m : report["methods"]) {
    const double y = m["mean"]["y"];
    if (m["method"] == "StructuredRewritten") ident_y = y;
    else best_other = std::max(best_other, y);
  }
  CHECK(ident_y == 10.0);
  CHECK(ident_y > best_other);

  CHECK(run_cli(w.dir, "evaluate --mode adversarial --source data/source.jsonl --repos repos --out adv ident styl pat").code == 5);
  CHECK(run_cli(w.dir, "adversarial --source data/source.jsonl --repos repos --out adv ident").code == 5);
  CHECK(run_cli(w.dir, "evaluate --source data/source.jsonl --repos repos --out none").code == 5);
  auto adv = run_cli(w.dir, "adversarial --source data/source.jsonl --repos repos --out adv --csv ident styl");
  CHECK(adv.code == 0);
  CHECK(w.exists("adv/report.json"));
}

TEST_CASE("config echo reproduces a run") {
  Workspace w;
  REQUIRE(run_cli(w.dir, "--alpha 0.6 --window-sentences 2 acquire --corpus data/corpus.jsonl --out repos").code == 0);
  REQUIRE(run_cli(w.dir, "--alpha 0.6 --window-sentences 2 transfer --source data/source.jsonl --repos repos --out a").code == 0);
  auto trace = nlohmann::json::parse(w.read("a/trace.json"));
  zerostylus::write_file_atomic(w.dir / "echo.json", trace["config"].dump(2));
  REQUIRE(run_cli(w.dir, "--config echo.json transfer --out b").code == 0);
  check_same_transfer(w, "a", "b");
}

TEST_CASE("repo inspect and usage errors") {
  Workspace w;
  REQUIRE(run_cli(w.dir, "acquire --corpus data/corpus.jsonl --out repos").code == 0);
  auto r = run_cli(w.dir, "repo inspect repos/paragraph_repo.json");
  CHECK(r.code == 0);
  CHECK_FALSE(r.out.empty());
  CHECK(run_cli(w.dir, "--bogus-flag acquire").code == 5);
  CHECK(run_cli(w.dir, "--alpha 2 --variant DirectPrompt transfer --source data/source.jsonl --references data/corpus.jsonl --out out").code == 2);
}

}  // TEST_SUITE
