#include <benchmark/benchmark.h>

#include <numeric>

#include "redrisk/cohort.hpp"
#include "redrisk/featurize.hpp"
#include "redrisk/neuralnet.hpp"
#include "redrisk/random.hpp"
#include "redrisk/trees.hpp"

using namespace redrisk;

namespace {

struct SplitData {
  Matrix x;
  std::vector<double> y;
  std::vector<std::size_t> rows;
  std::vector<std::size_t> features;
};

const SplitData& split_data() {
  static const SplitData d = [] {
    SplitData s{Matrix(20000, 128), std::vector<double>(20000), std::vector<std::size_t>(20000),
                std::vector<std::size_t>(128)};
    Rng rng(1);
    for (auto& v : s.x.data()) v = rng.normal();
    for (std::size_t i = 0; i < 20000; ++i) s.y[i] = s.x(i, 0) + 0.5 * rng.normal() > 0 ? 1.0 : -1.0;
    std::iota(s.rows.begin(), s.rows.end(), 0);
    std::iota(s.features.begin(), s.features.end(), 0);
    return s;
  }();
  return d;
}

void BM_BestSplitReference(benchmark::State& state) {
  const auto& d = split_data();
  const trees::SplitProblem p{&d.x, d.y, d.rows, trees::Task::kClassification, 1};
  for (auto _ : state) benchmark::DoNotOptimize(trees::best_split_reference(p, d.features));
}

void BM_BestSplitParallel(benchmark::State& state) {
  const auto& d = split_data();
  const trees::SplitProblem p{&d.x, d.y, d.rows, trees::Task::kClassification, 1};
  for (auto _ : state) benchmark::DoNotOptimize(trees::best_split(p, d.features, Execution::kParallel));
}

struct NetData {
  nn::NetParamsState net;
  Matrix x;
  std::vector<int> labels;
  std::vector<std::size_t> rows;
  std::vector<nn::DropoutMasks> masks;
};

const NetData& net_data() {
  static const NetData d = [] {
    nn::NetArchitecture arch;
    arch.input_dim = 400;
    arch.n_tasks = 6;
    NetData s{nn::init_network(arch, 1), Matrix(4096, 400), std::vector<int>(4096 * 6), {}, {}};
    Rng rng(2);
    for (auto& v : s.x.data()) v = rng.normal();
    for (auto& v : s.labels) v = rng.bernoulli(0.2) ? 1 : -1;
    s.rows.resize(4096);
    std::iota(s.rows.begin(), s.rows.end(), 0);
    for (std::size_t i = 0; i < 4096; ++i) s.masks.push_back(nn::draw_masks(arch, 0.5, rng));
    return s;
  }();
  return d;
}

void BM_BatchGradientReference(benchmark::State& state) {
  const auto& d = net_data();
  double loss = 0;
  for (auto _ : state) benchmark::DoNotOptimize(nn::batch_gradient_reference(d.net, d.x, d.labels, d.rows, d.masks, loss));
}

void BM_BatchGradientParallel(benchmark::State& state) {
  const auto& d = net_data();
  double loss = 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(nn::batch_gradient(d.net, d.x, d.labels, d.rows, d.masks, loss, Execution::kParallel));
}

const cohort::CohortDataset& cohort_data() {
  static const auto d = [] {
    cohort::SyntheticConfig c;
    c.n_patients = 3000;
    return cohort::generate_synthetic_cohort(c, 1);
  }();
  return d;
}

void BM_FeaturesSerial(benchmark::State& state) {
  featurize::FeatureOptions o;
  o.execution = Execution::kSerial;
  for (auto _ : state) benchmark::DoNotOptimize(featurize::build_feature_matrix(cohort_data(), featurize::FeatureSet::kFs3, o));
}

void BM_FeaturesParallel(benchmark::State& state) {
  featurize::FeatureOptions o;
  o.execution = Execution::kParallel;
  for (auto _ : state) benchmark::DoNotOptimize(featurize::build_feature_matrix(cohort_data(), featurize::FeatureSet::kFs3, o));
}

}  // namespace

BENCHMARK(BM_BestSplitReference)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_BestSplitParallel)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_BatchGradientReference)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_BatchGradientParallel)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_FeaturesSerial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_FeaturesParallel)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
