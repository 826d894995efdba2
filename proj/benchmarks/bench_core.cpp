#include <benchmark/benchmark.h>

#include <random>
#include <string>

#include <fmt/format.h>

#include "agentfuzz/campaign.hpp"
#include "agentfuzz/fitness.hpp"
#include "agentfuzz/mutation.hpp"
#include "agentfuzz/sandbox.hpp"

namespace {

using namespace agentfuzz;

SeedPool make_pool(std::size_t size) {
  std::mt19937_64 gen(1);
  SeedPool pool;
  for (std::size_t i = 0; i < size; ++i) {
    SeedNode node;
    node.question.id = fmt::format("q{:06}", i);
    node.stats.visits = static_cast<int>(gen() % 15);
    node.stats.total_reward = static_cast<double>(gen() % 1000) / 500.0;
    pool.nodes.emplace(node.question.id, std::move(node));
  }
  return pool;
}

void BM_MctsSelect(benchmark::State& state) {
  auto pool = make_pool(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(mcts_select(pool, 0.5));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_MctsSelect)->RangeMultiplier(4)->Range(16, 4096)->Complexity();

void BM_SentenceSplit(benchmark::State& state) {
  std::string text;
  for (int i = 0; i < state.range(0); ++i) {
    text += fmt::format("Sentence {} checks e.g. values like 3.5 in `f(x)`. ", i);
  }
  for (auto _ : state) benchmark::DoNotOptimize(sentence_split(text));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(text.size()));
}
BENCHMARK(BM_SentenceSplit)->Arg(4)->Arg(32)->Arg(256);

void BM_Cosine(benchmark::State& state) {
  std::mt19937_64 gen(2);
  std::normal_distribution<double> nd;
  EmbeddingVector a, b;
  for (int i = 0; i < state.range(0); ++i) {
    a.values.push_back(nd(gen));
    b.values.push_back(nd(gen));
  }
  for (auto _ : state) benchmark::DoNotOptimize(cosine_similarity(a, b));
}
BENCHMARK(BM_Cosine)->Arg(256)->Arg(1536);

void BM_EncodeJob(benchmark::State& state) {
  ExecutionJob job;
  job.job_id = "bench";
  job.candidate_source = std::string(2000, 'x');
  for (int i = 0; i < state.range(0); ++i) job.suite.cases.push_back(fmt::format("assert f({}) == {}", i, i * i));
  for (auto _ : state) benchmark::DoNotOptimize(encode_job(job));
}
BENCHMARK(BM_EncodeJob)->Arg(5)->Arg(100);

}  // namespace

BENCHMARK_MAIN();
