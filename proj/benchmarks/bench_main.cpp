#include <benchmark/benchmark.h>

#include "conslab/analysis.hpp"
#include "conslab/metrics.hpp"
#include "conslab/probe.hpp"
#include "conslab/trainer.hpp"

using namespace conslab;

namespace {

PredictionTable random_table(std::size_t tuples, std::size_t patterns, std::uint64_t seed) {
  Rng rng(seed);
  const std::vector<std::string> symbols = {"A", "B", "C", "D", "E"};
  PredictionTable t;
  t.relation_id = "B";
  for (std::size_t p = 0; p < patterns; ++p) {
    t.patterns.push_back({p == 0, static_cast<int>(p % 3), static_cast<int>(p % 4)});
  }
  for (std::size_t i = 0; i < tuples; ++i) {
    t.subjects.push_back("s" + std::to_string(i));
    t.gold.push_back(symbols[uniform_index(rng, symbols.size())]);
    std::vector<std::string> row;
    for (std::size_t p = 0; p < patterns; ++p) row.push_back(symbols[uniform_index(rng, symbols.size())]);
    t.predictions.push_back(std::move(row));
  }
  return t;
}

struct SynthSetup {
  SynthKB kb;
  std::vector<Relation> relations;
  ToyMlm model;
};

const SynthSetup& synth_setup() {
  static const SynthSetup setup = [] {
    auto kb = generate_synth_kb({});
    auto relations = attach_candidates(kb.relations, kb.tuples);
    auto model = ToyMlm::random(vocabulary_for(kb.relations, kb.tuples), ToyDims{}, 1);
    return SynthSetup{std::move(kb), std::move(relations), std::move(model)};
  }();
  return setup;
}

}  // namespace

static void BM_Evaluate(benchmark::State& state) {
  const auto table = random_table(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)), 7);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(table));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Evaluate)->Args({10, 6})->Args({1000, 9})->Args({1000, 20});

static void BM_ToyForward(benchmark::State& state) {
  const auto& s = synth_setup();
  const auto enc = encode_cloze(s.model.vocab(), populate(s.relations[0], 0, "e01", kMaskToken).text);
  for (auto _ : state) benchmark::DoNotOptimize(s.model.forward_at(enc.ids, enc.mask_position));
}
BENCHMARK(BM_ToyForward);

static void BM_CombinedLoss(benchmark::State& state) {
  const auto& s = synth_setup();
  const auto own = tuples_of(s.kb.tuples, s.relations[0].id);
  const std::vector<KBTuple> batch(own.begin(), own.begin() + 8);
  TrainConfig config;
  Rng rng(3);
  const auto assembled = assemble_batch(s.model, s.relations[0], batch, config, rng);
  for (auto _ : state) benchmark::DoNotOptimize(combined_loss(s.model, assembled, config));
}
BENCHMARK(BM_CombinedLoss);

static void BM_ProbeSynth(benchmark::State& state) {
  const auto& s = synth_setup();
  const ToyScorer scorer(s.model);
  for (auto _ : state) benchmark::DoNotOptimize(probe(scorer, s.relations, s.kb.tuples));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(query_count(s.relations, s.kb.tuples)));
}
BENCHMARK(BM_ProbeSynth)->Unit(benchmark::kMillisecond);

static void BM_KMeans(benchmark::State& state) {
  Rng rng(5);
  std::vector<std::vector<double>> points(static_cast<std::size_t>(state.range(0)), std::vector<double>(32));
  for (auto& p : points) {
    for (auto& v : p) v = standard_normal(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(kmeans(points, static_cast<std::size_t>(state.range(1)), 1));
}
BENCHMARK(BM_KMeans)->Args({200, 4})->Args({200, 50})->Unit(benchmark::kMillisecond);

static void BM_McNemarExact(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(mcnemar_exact(12, 11));
}
BENCHMARK(BM_McNemarExact);

BENCHMARK_MAIN();
