#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "tsforge/judge.hpp"
#include "tsforge/metrics.hpp"
#include "tsforge/numeric.hpp"
#include "tsforge/synth.hpp"
#include "tsforge/vet.hpp"

using namespace tsforge;

namespace {

std::vector<double> gaussian(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

void BM_Textualize(benchmark::State& state) {
  const auto norm = numeric::zscore_normalize(gaussian(static_cast<std::size_t>(state.range(0)), 1));
  for (auto _ : state) benchmark::DoNotOptimize(numeric::textualize_window(norm.values));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Textualize)->Arg(64)->Arg(1024);

void BM_JudgeMath(benchmark::State& state) {
  const std::array<double, 5> lp{-4.1, -2.3, -0.9, -0.4, -1.7};
  for (auto _ : state) {
    const auto d = judge::distribution_from_logprobs(lp);
    benchmark::DoNotOptimize(judge::weighted_score(d) + judge::confidence(d));
  }
}
BENCHMARK(BM_JudgeMath);

void BM_AucRoc(benchmark::State& state) {
  metrics::LabeledScores d;
  d.scores = gaussian(static_cast<std::size_t>(state.range(0)), 2);
  std::mt19937_64 rng(3);
  for (std::size_t i = 0; i < d.scores.size(); ++i) d.labels.push_back(rng() % 10 == 0 ? 1 : 0);
  d.labels[0] = 1;
  d.labels[1] = 0;
  for (auto _ : state) benchmark::DoNotOptimize(metrics::auc_roc(d).value);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_AucRoc)->Arg(1000)->Arg(100000);

void BM_PaF1(benchmark::State& state) {
  metrics::LabeledScores d;
  d.scores = gaussian(static_cast<std::size_t>(state.range(0)), 4);
  for (std::size_t i = 0; i < d.scores.size(); ++i) d.labels.push_back((i / 50) % 7 == 3 ? 1 : 0);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::pa_f1_at(d, 1.0).value);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PaF1)->Arg(100000);

void BM_GeneratePair(benchmark::State& state) {
  synth::ForgeRanges ranges;
  ranges.anomalies_min = 2;
  const auto cfg = synth::sample_baseline_config(ranges, 5);
  const auto plan = synth::sample_plan(ranges, cfg, 5);
  for (auto _ : state) benchmark::DoNotOptimize(synth::generate_pair("P", cfg, plan));
}
BENCHMARK(BM_GeneratePair);

void BM_TrigramJaccard(benchmark::State& state) {
  const std::string a = "Which of the following best describes the behavior of the time series window from step 10 to 50?";
  const std::string b = "Which of the following best describes the behaviour of the series window between steps 12 and 52?";
  for (auto _ : state) benchmark::DoNotOptimize(vet::trigram_jaccard(a, b));
}
BENCHMARK(BM_TrigramJaccard);

}  // namespace

BENCHMARK_MAIN();
