#include <benchmark/benchmark.h>

#include <random>

#include "pipeline.hpp"
#include "zerostylus/evaluation.hpp"

namespace zs = zerostylus;

namespace {

std::string sentence(std::mt19937_64& rng) {
  static const char* words[] = {"the", "letters", "travel", "far", "and", "are", "read", "with", "care",
                                "morning", "window", "quiet", "guests", "arrive", "parlour", "fills"};
  std::string s;
  for (std::size_t i = 0, n = 5 + rng() % 12; i < n; ++i) s += std::string(i ? " " : "") + words[rng() % 16];
  return s + ".";
}

void BM_MockEmbed(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::vector<std::string> texts;
  for (int i = 0; i < state.range(0); ++i) texts.push_back(sentence(rng));
  zs::embedding::MockEmbeddingBackend backend(zs::embedding::EmbeddingBackendSpec{});
  for (auto _ : state) benchmark::DoNotOptimize(backend.embed(texts));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MockEmbed)->Arg(64)->Arg(512);

void BM_BuildSentenceRepo(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::vector<zs::templates::SentenceInput> inputs;
  for (int i = 0; i < state.range(0); ++i) {
    auto text = sentence(rng);
    inputs.push_back({"s" + std::to_string(i), text, zs::embedding::mock_embed(text, 256, 0, "mock")});
  }
  for (auto _ : state) benchmark::DoNotOptimize(zs::templates::build_sentence_repo(inputs, {}));
}
BENCHMARK(BM_BuildSentenceRepo)->Arg(100)->Arg(400);

void BM_MatchSentence(benchmark::State& state) {
  std::mt19937_64 rng(3);
  zs::templates::SentenceRepo repo;
  repo.backend_id = "mock";
  repo.dim = 256;
  for (int i = 0; i < state.range(0); ++i) {
    auto text = sentence(rng);
    repo.templates.push_back({i, zs::embedding::mock_embed(text, 256, 0, "mock"), text, "s", 1, std::nullopt});
  }
  const auto q = zs::embedding::mock_embed(sentence(rng), 256, 0, "mock");
  for (auto _ : state) benchmark::DoNotOptimize(zs::matching::match_sentence(repo, q));
}
BENCHMARK(BM_MatchSentence)->Arg(50)->Arg(1000);

void BM_TransferDocument(benchmark::State& state) {
  pipeline::Setup setup;
  pipeline::build(setup, pipeline::reference_docs());
  const auto source = zs::corpus::segment(pipeline::source_doc());
  zs::transfer::TransferConfig cfg;
  cfg.alpha = 0.7;
  cfg.variant = static_cast<zs::transfer::Variant>(state.range(0));
  for (auto _ : state) {
    zs::generation::MockGenerationBackend gen;
    benchmark::DoNotOptimize(zs::transfer::transfer_document(source, setup.resources(gen), cfg));
  }
  state.SetLabel(std::string(zs::transfer::to_string(cfg.variant)));
}
BENCHMARK(BM_TransferDocument)->DenseRange(0, 4);

void BM_PairwisePreference(benchmark::State& state) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-5, 5);
  std::vector<double> prefs(1000);
  for (auto _ : state) {
    for (auto& p : prefs) p = zs::evaluation::pairwise_preference(u(rng), u(rng));
    benchmark::DoNotOptimize(zs::evaluation::win_rate(prefs));
  }
}
BENCHMARK(BM_PairwisePreference);

}  // namespace

BENCHMARK_MAIN();
