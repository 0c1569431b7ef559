#include "oracles.hpp"
#include "qpsynth/errors.hpp"
#include "qpsynth/kernel_states.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace qpsynth;
namespace t = qpsynth::testing;

namespace {

Eigen::MatrixXd random_dissimilarity(Index n, Rng& rng) {
  std::uniform_real_distribution<double> u(0.1, 5.0);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = u(rng);
  return d;
}

Eigen::MatrixXd scalar(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }

}  // namespace

TEST(Jeffreys, ScalarHandValue) {
  // KL(0||1) = (0.5 - 1 + ln 2) / 2, KL(1||0) = (2 - 1 - ln 2) / 2
  EXPECT_NEAR(jeffreys_divergence(scalar(1.0), scalar(2.0)), 0.125, 1e-10);
  EXPECT_NEAR(0.5 * (0.5 * (0.5 - 1 + std::log(2.0)) + 0.5 * (2 - 1 - std::log(2.0))), 0.125, 1e-15);
}

TEST(Jeffreys, MatchesTraceLogdetFormula) {
  Rng rng(1);
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::MatrixXd x = t::gaussian_matrix(6, 6, rng), y = t::gaussian_matrix(6, 6, rng);
    const Eigen::MatrixXd a = x * x.transpose() + Eigen::MatrixXd::Identity(6, 6);
    const Eigen::MatrixXd b = y * y.transpose() + Eigen::MatrixXd::Identity(6, 6);
    auto kl = [](const Eigen::MatrixXd& s0, const Eigen::MatrixXd& s1) {
      return 0.5 * ((s1.inverse() * s0).trace() - 6 + std::log(s1.determinant()) - std::log(s0.determinant()));
    };
    EXPECT_NEAR(jeffreys_divergence(a, b), 0.5 * (kl(a, b) + kl(b, a)), 1e-9 * std::max(1.0, kl(a, b)));
  }
}

TEST(GaussianDivergence, ZeroSymmetricNonnegative) {
  Rng rng(2);
  const DivergenceConfig cfg;
  for (int rep = 0; rep < 100; ++rep) {
    const KernelHyperparams a = t::random_params(rng), b = t::random_params(rng);
    EXPECT_NEAR(gaussian_divergence(a, a, cfg), 0.0, 1e-8);
    const double ab = gaussian_divergence(a, b, cfg);
    EXPECT_EQ(ab, gaussian_divergence(b, a, cfg));
    EXPECT_GE(ab, 0.0);
  }
}

TEST(GaussianDivergence, IgnoresNoiseVariance) {
  const DivergenceConfig cfg;
  KernelHyperparams a{1, 1, 0.5, 1, 0.0}, b = a;
  b.noise_var = 0.7;
  EXPECT_EQ(gaussian_divergence(a, b, cfg), 0.0);
}

TEST(GaussianDivergence, MonteCarloJsAgreesInRanking) {
  Rng rng(3);
  DivergenceConfig jeff;
  jeff.grid_size = 16;
  jeff.horizon = 4.0;
  DivergenceConfig js = jeff;
  js.mode = DivergenceMode::monte_carlo_js;
  js.mc_samples = 100000;
  int agree = 0;
  const int triples = 30;
  for (int rep = 0; rep < triples; ++rep) {
    const KernelHyperparams a = t::random_params(rng), b = t::random_params(rng), c = t::random_params(rng);
    js.seed = static_cast<std::uint64_t>(rep);
    const bool closed = gaussian_divergence(a, b, jeff) < gaussian_divergence(a, c, jeff);
    const bool mc = gaussian_divergence(a, b, js) < gaussian_divergence(a, c, js);
    agree += closed == mc;
  }
  EXPECT_GE(agree, 27) << agree << "/" << triples;
}

TEST(GaussianDivergence, JsIsBoundedByLog2) {
  Rng rng(4);
  const double v = js_divergence_mc(scalar(1.0), scalar(1e4), 20000, rng);
  EXPECT_GT(v, 0.0);
  EXPECT_LE(v, std::log(2.0) + 0.02);
}

TEST(PairwiseDivergences, IdenticalParamsGiveZeros) {
  const KernelHyperparams p{1, 1, 0.5, 1, 0.1};
  EXPECT_TRUE(pairwise_divergences({p, p}, DivergenceConfig{}).isZero(0.0));
}

TEST(PairwiseDivergences, SymmetricAndMatchesSingleCalls) {
  Rng rng(5);
  const DivergenceConfig cfg;
  const std::vector<KernelHyperparams> ps{t::random_params(rng), t::random_params(rng), t::random_params(rng)};
  const Eigen::MatrixXd d = pairwise_divergences(ps, cfg);
  EXPECT_TRUE(d == d.transpose());
  for (Index i = 0; i < 3; ++i) {
    EXPECT_EQ(d(i, i), 0.0);
    for (Index j = 0; j < 3; ++j)
      if (i != j) EXPECT_NEAR(d(i, j), gaussian_divergence(ps[i], ps[j], cfg), 1e-9 * std::max(1.0, d(i, j)));
  }
}

TEST(PairwiseDivergences, NeedsTwo) {
  EXPECT_THROW(pairwise_divergences({KernelHyperparams{}}, DivergenceConfig{}), ParameterError);
}

TEST(Cluster, SeparableGroups) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Ones(6, 6);
  const std::vector<Index> group{0, 1, 0, 1, 1, 0};
  for (Index i = 0; i < 6; ++i)
    for (Index j = 0; j < 6; ++j)
      if (group[i] == group[j]) d(i, j) = 0.0;
  EXPECT_EQ(cluster(d, 2), group);
}

TEST(Cluster, AsManyClustersAsPointsGivesSingletons) {
  Rng rng(6);
  EXPECT_EQ(cluster(random_dissimilarity(5, rng), 5), (std::vector<Index>{0, 1, 2, 3, 4}));
}

TEST(Cluster, MatchesBruteForceLinkage) {
  Rng rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    const Eigen::MatrixXd d = random_dissimilarity(8, rng);
    for (Index m : {1, 3, 5}) EXPECT_EQ(cluster(d, m), t::brute_force_average_linkage(d, m)) << "rep " << rep;
  }
}

TEST(Cluster, InvariantToUniformScaling) {
  Rng rng(8);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::MatrixXd d = random_dissimilarity(10, rng);
    EXPECT_EQ(cluster(d, 4), cluster(7.25 * d, 4));
  }
}

TEST(Cluster, TiesGoToLowestPair) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Ones(4, 4);
  d.diagonal().setZero();
  EXPECT_EQ(cluster(d, 3), (std::vector<Index>{0, 0, 1, 2}));
}

TEST(Cluster, RejectsBadInput) {
  Rng rng(9);
  const Eigen::MatrixXd d = random_dissimilarity(4, rng);
  EXPECT_THROW(cluster(d, 5), ParameterError);
  EXPECT_THROW(cluster(d, 0), ParameterError);
  Eigen::MatrixXd asym = d;
  asym(0, 1) += 1.0;
  EXPECT_THROW(cluster(asym, 2), ParameterError);
}

TEST(Medoid, Singleton) {
  Rng rng(10);
  EXPECT_EQ(medoid(random_dissimilarity(4, rng), {0, 1, 1, 2}, 2), 3);
}

TEST(Medoid, MiddleOfLine) {
  Eigen::MatrixXd d(3, 3);
  d << 0, 1, 2, 1, 0, 1, 2, 1, 0;
  EXPECT_EQ(medoid(d, {0, 0, 0}, 0), 1);
}

TEST(Medoid, TieGoesToLowerIndex) {
  Eigen::MatrixXd d(2, 2);
  d << 0, 1, 1, 0;
  EXPECT_EQ(medoid(d, {0, 0}, 0), 0);
}

TEST(Medoid, EmptyClusterIsParameterError) {
  EXPECT_THROW(medoid(Eigen::MatrixXd::Zero(2, 2), {0, 0}, 1), ParameterError);
}

TEST(EstimateTransitions, HandCount) {
  const Transitions tr = estimate_transitions({{0, 0, 1, 0}}, 2);
  Eigen::MatrixXd p(2, 2);
  p << 0.5, 0.5, 1.0, 0.0;
  EXPECT_EQ(tr.p, p);
  EXPECT_EQ(tr.pi0, Eigen::Vector2d(1.0, 0.0));
}

TEST(EstimateTransitions, SingleState) {
  EXPECT_EQ(estimate_transitions({{0, 0, 0}}, 1).p, Eigen::MatrixXd::Ones(1, 1));
}

TEST(EstimateTransitions, AbsorbingRowBacksOffToMarginal) {
  const Transitions tr = estimate_transitions({{0, 1}}, 2);
  EXPECT_EQ(tr.p.row(1), Eigen::RowVector2d(0.5, 0.5));
  EXPECT_EQ(tr.p.row(0), Eigen::RowVector2d(0.0, 1.0));
}

TEST(EstimateTransitions, PooledCountsAcrossSequences) {
  const Transitions tr = estimate_transitions({{0, 1}, {1, 1, 0}, {2}}, 3);
  // transitions 0->1, 1->1, 1->0; state 2 never leaves; marginal counts 2, 3, 1
  EXPECT_EQ(tr.p.row(0), Eigen::RowVector3d(0, 1, 0));
  EXPECT_EQ(tr.p.row(1), Eigen::RowVector3d(0.5, 0.5, 0));
  EXPECT_TRUE(tr.p.row(2).isApprox(Eigen::RowVector3d(2.0 / 6, 3.0 / 6, 1.0 / 6)));
  EXPECT_TRUE(tr.pi0.isApprox(Eigen::Vector3d(1.0 / 3, 1.0 / 3, 1.0 / 3)));
}

TEST(EstimateTransitions, AlwaysStochastic) {
  Rng rng(11);
  std::uniform_int_distribution<Index> state(0, 4), len(1, 12);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<std::vector<Index>> seqs(3);
    for (auto& s : seqs) {
      const Index n = len(rng);
      for (Index i = 0; i < n; ++i) s.push_back(state(rng));
    }
    const Transitions tr = estimate_transitions(seqs, 5);
    EXPECT_LT((tr.p.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-9);
    EXPECT_NEAR(tr.pi0.sum(), 1.0, 1e-9);
    EXPECT_GE(tr.p.minCoeff(), 0.0);
  }
}

TEST(EstimateTransitions, RejectsBadInput) {
  EXPECT_THROW(estimate_transitions({}, 2), ParameterError);
  EXPECT_THROW(estimate_transitions({{}}, 2), ParameterError);
  EXPECT_THROW(estimate_transitions({{0, 2}}, 2), ParameterError);
}

namespace {

KernelStateLibrary chain(const Eigen::MatrixXd& p, const Eigen::VectorXd& pi0) {
  KernelStateLibrary lib;
  lib.medoids.assign(static_cast<std::size_t>(p.rows()), KernelHyperparams{});
  lib.transition = p;
  lib.initial = pi0;
  return lib;
}

}  // namespace

TEST(SampleStateSequence, IdentityChainStays) {
  Rng rng(12);
  const auto seq = sample_state_sequence(chain(Eigen::MatrixXd::Identity(3, 3), Eigen::Vector3d(1, 0, 0)), 50, rng);
  EXPECT_EQ(seq, std::vector<Index>(50, 0));
}

TEST(SampleStateSequence, SwapChainAlternates) {
  Rng rng(13);
  Eigen::MatrixXd p(2, 2);
  p << 0, 1, 1, 0;
  const auto seq = sample_state_sequence(chain(p, Eigen::Vector2d(1, 0)), 9, rng);
  EXPECT_EQ(seq, (std::vector<Index>{0, 1, 0, 1, 0, 1, 0, 1, 0}));
}

TEST(SampleStateSequence, LongRunMatchesStationaryDistribution) {
  Eigen::MatrixXd p(3, 3);
  p << 0.5, 0.3, 0.2, 0.2, 0.6, 0.2, 0.3, 0.3, 0.4;
  const Eigen::VectorXd pi = t::stationary_distribution(p);
  Rng rng(14);
  const auto seq = sample_state_sequence(chain(p, Eigen::Vector3d(1, 0, 0)), 100000, rng);
  Eigen::Vector3d freq = Eigen::Vector3d::Zero();
  for (Index s : seq) freq(s) += 1.0;
  freq /= 100000.0;
  for (Index i = 0; i < 3; ++i) EXPECT_NEAR(freq(i) / pi(i), 1.0, 0.02) << "state " << i;
}

TEST(SampleStateSequence, DeterministicAndRejectsZeroLength) {
  Eigen::MatrixXd p(2, 2);
  p << 0.3, 0.7, 0.6, 0.4;
  const KernelStateLibrary lib = chain(p, Eigen::Vector2d(0.5, 0.5));
  Rng a(15), b(15);
  EXPECT_EQ(sample_state_sequence(lib, 100, a), sample_state_sequence(lib, 100, b));
  EXPECT_THROW(sample_state_sequence(lib, 0, a), ParameterError);
}

TEST(BuildStateLibrary, SingleSegmentGivesOneState) {
  const KernelHyperparams p{1, 1, 0.5, 1, 0.1};
  const KernelStateLibrary lib = build_state_library({p}, {{0}}, 50, DivergenceConfig{});
  EXPECT_EQ(lib.states(), 1);
  EXPECT_EQ(lib.medoids.front(), p);
  EXPECT_EQ(lib.transition, Eigen::MatrixXd::Ones(1, 1));
}

TEST(BuildStateLibrary, ClampsAndKeepsInvariants) {
  Rng rng(16);
  std::vector<KernelHyperparams> ps;
  for (int i = 0; i < 7; ++i) ps.push_back(t::random_params(rng));
  const KernelStateLibrary lib = build_state_library(ps, {{0, 1, 2, 3}, {4, 5, 6}}, 50, DivergenceConfig{});
  EXPECT_EQ(lib.states(), 7);
  EXPECT_NO_THROW(lib.validate());

  const KernelStateLibrary three = build_state_library(ps, {{0, 1, 2, 3}, {4, 5, 6}}, 3, DivergenceConfig{});
  EXPECT_EQ(three.states(), 3);
  ASSERT_EQ(three.labels.size(), 7u);
  // each medoid is a member of its own cluster
  const Eigen::MatrixXd d = pairwise_divergences(ps, DivergenceConfig{});
  for (Index m = 0; m < 3; ++m) {
    const Index idx = medoid(d, three.labels, m);
    EXPECT_EQ(three.labels[static_cast<std::size_t>(idx)], m);
    EXPECT_EQ(three.medoids[static_cast<std::size_t>(m)], ps[static_cast<std::size_t>(idx)]);
  }
  EXPECT_LT((three.transition.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-9);
  EXPECT_NEAR(three.initial.sum(), 1.0, 1e-9);
}
