#include "qpsynth/gp.hpp"
#include "qpsynth/kernel_states.hpp"
#include "qpsynth/metrics.hpp"

#include <benchmark/benchmark.h>

using namespace qpsynth;

namespace {

const KernelHyperparams kParams{1.0, 1.0, 0.25, 2.0, 0.1};

Eigen::VectorXd noise(Index n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g;
  return Eigen::VectorXd::NullaryExpr(n, [&] { return g(rng); });
}

}  // namespace

static void BM_LmlGradient(benchmark::State& state) {
  const Index n = state.range(0);
  const Eigen::VectorXd t = sample_times(n, 256.0 / 25.0);
  const Eigen::VectorXd y = noise(n, 1);
  for (auto _ : state) benchmark::DoNotOptimize(log_marginal_likelihood_with_gradient(kParams, t, y));
}
BENCHMARK(BM_LmlGradient)->Arg(64)->Arg(128)->Arg(256);

static void BM_CovarianceFactor(benchmark::State& state) {
  const Eigen::VectorXd grid = sample_times(state.range(0), 256.0);
  for (auto _ : state) benchmark::DoNotOptimize(covariance_factor(kParams, grid, 1e-3));
}
BENCHMARK(BM_CovarianceFactor)->Arg(256)->Arg(640);

static void BM_PairwiseDivergences(benchmark::State& state) {
  std::vector<KernelHyperparams> ps;
  for (Index i = 0; i < state.range(0); ++i) {
    KernelHyperparams p = kParams;
    p.period = 0.2 + 0.05 * static_cast<double>(i);
    ps.push_back(p);
  }
  const DivergenceConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(pairwise_divergences(ps, cfg));
}
BENCHMARK(BM_PairwiseDivergences)->Arg(8)->Arg(24)->Unit(benchmark::kMillisecond);

static void BM_Mdd(benchmark::State& state) {
  SampleSet a, b;
  for (std::uint64_t s = 0; s < 32; ++s) {
    a.push_back(noise(1024 * 4, s).reshaped(1024, 4));
    b.push_back(noise(1024 * 4, 100 + s).reshaped(1024, 4));
  }
  for (auto _ : state) benchmark::DoNotOptimize(mdd(a, b));
}
BENCHMARK(BM_Mdd)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
