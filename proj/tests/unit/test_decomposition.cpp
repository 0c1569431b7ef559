#include "oracles.hpp"
#include "qpsynth/decomposition.hpp"
#include "qpsynth/errors.hpp"

#include <gtest/gtest.h>

using namespace qpsynth;
using qpsynth::testing::gaussian_matrix;

namespace {

Recording from_matrix(const Eigen::MatrixXd& x) {
  Recording r;
  r.data = x;
  r.fs = 100;
  r.channel_labels = default_channel_labels(x.cols());
  return r;
}

Eigen::MatrixXd centered(Eigen::MatrixXd x) {
  x.rowwise() -= x.colwise().mean();
  return x;
}

}  // namespace

TEST(StackAndCenter, ConcatenatesWithBoundaries) {
  Rng rng(1);
  const auto s = stack_and_center({from_matrix(gaussian_matrix(4, 2, rng)), from_matrix(gaussian_matrix(4, 2, rng))});
  EXPECT_EQ(s.centered.rows(), 8);
  EXPECT_EQ(s.centered.cols(), 2);
  EXPECT_EQ(s.sample_boundaries, (std::vector<Index>{4, 8}));
}

TEST(StackAndCenter, ColumnsSumToZero) {
  Rng rng(2);
  Eigen::MatrixXd a = gaussian_matrix(500, 5, rng).array() + 3.0;
  const auto s = stack_and_center({from_matrix(a), from_matrix(gaussian_matrix(300, 5, rng))});
  EXPECT_LT(s.centered.colwise().sum().cwiseAbs().maxCoeff(), 1e-8 * 800);
}

TEST(StackAndCenter, MeansMatchDirectAverage) {
  Rng rng(3);
  const Eigen::MatrixXd a = gaussian_matrix(64, 4, rng);
  const auto s = stack_and_center({from_matrix(a)});
  for (Index c = 0; c < 4; ++c) {
    double sum = 0;
    for (Index i = 0; i < 64; ++i) sum += a(i, c);
    EXPECT_NEAR(s.column_means(c), sum / 64, 1e-12);
  }
}

TEST(StackAndCenter, MismatchedChannelsIsShapeError) {
  Rng rng(4);
  EXPECT_THROW(stack_and_center({from_matrix(gaussian_matrix(4, 2, rng)), from_matrix(gaussian_matrix(4, 3, rng))}),
               ShapeError);
}

TEST(FitSvd, RankOneIsExact) {
  Rng rng(5);
  const Eigen::MatrixXd x = gaussian_matrix(80, 1, rng) * gaussian_matrix(1, 6, rng);
  const SvdFit f = fit_svd(x, 1);
  EXPECT_LT((x - reconstruct(f.scores.scores, f.model, false)).norm(), 1e-9 * x.norm());
}

TEST(FitSvd, FullRankIsExact) {
  Rng rng(6);
  const Eigen::MatrixXd x = centered(gaussian_matrix(100, 18, rng));
  const SvdFit f = fit_svd(x, 18);
  EXPECT_LT((x - reconstruct(f.scores.scores, f.model, false)).norm() / x.norm(), 1e-8);
}

TEST(FitSvd, ResidualMatchesSvdOracle) {
  Rng rng(7);
  const Eigen::MatrixXd x = centered(gaussian_matrix(200, 18, rng));
  const SvdFit f = fit_svd(x, 3);
  const double resid = (x - reconstruct(f.scores.scores, f.model, false)).squaredNorm();
  const double oracle = qpsynth::testing::tail_energy(x, 3);
  EXPECT_NEAR(resid / oracle, 1.0, 1e-8);
}

TEST(FitSvd, RankAboveDimensionsIsParameterError) {
  Rng rng(8);
  EXPECT_THROW(fit_svd(gaussian_matrix(10, 4, rng), 5), ParameterError);
  EXPECT_THROW(fit_svd(gaussian_matrix(3, 4, rng), 4), ParameterError);
  EXPECT_THROW(fit_svd(gaussian_matrix(10, 4, rng), 0), ParameterError);
}

TEST(FitSvd, BeatsRandomProjections) {
  Rng rng(9);
  const Eigen::MatrixXd x = centered(gaussian_matrix(150, 10, rng));
  for (Index d : {1, 3, 6}) {
    const SvdFit f = fit_svd(x, d);
    const double best = (x - reconstruct(f.scores.scores, f.model, false)).norm();
    for (int k = 0; k < 100; ++k) {
      const Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian_matrix(10, d, rng));
      const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(10, d);
      EXPECT_LE(best, (x - x * q * q.transpose()).norm() + 1e-12);
    }
  }
}

TEST(FitSvd, OrthonormalFactorsSortedValuesAndSigns) {
  Rng rng(10);
  const Eigen::MatrixXd x = centered(gaussian_matrix(400, 8, rng) * gaussian_matrix(8, 8, rng));
  const SvdFit f = fit_svd(x, 5);
  const Eigen::MatrixXd& u = f.scores.scores;
  const Eigen::MatrixXd v = f.model.right_vectors();
  EXPECT_LT((u.transpose() * u - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((v.transpose() * v - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-8);
  for (Index r = 1; r < 5; ++r) EXPECT_GE(f.model.singular_values(r - 1), f.model.singular_values(r));
  for (Index r = 0; r < 5; ++r) {
    Index arg;
    v.col(r).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(v(arg, r), 0.0);
  }
}

TEST(FitSvd, SpectralEnergyIsConserved) {
  Rng rng(11);
  const Eigen::MatrixXd x = centered(gaussian_matrix(120, 7, rng));
  const SvdFit f = fit_svd(x, 7);
  EXPECT_NEAR(f.model.singular_values.squaredNorm() / x.squaredNorm(), 1.0, 1e-8);
}

TEST(Reconstruct, ZeroScoresGiveZero) {
  Rng rng(12);
  const SvdFit f = fit_svd(centered(gaussian_matrix(50, 4, rng)), 2);
  EXPECT_TRUE(reconstruct(Eigen::MatrixXd::Zero(9, 2), f.model, false).isZero(0.0));
}

TEST(Reconstruct, WithMeansRecoversInputUpToResidual) {
  Rng rng(13);
  Eigen::MatrixXd raw = gaussian_matrix(200, 6, rng);
  raw.rowwise() += Eigen::RowVectorXd::LinSpaced(6, -3, 4);
  const auto stacked = stack_and_center({from_matrix(raw)});
  const SvdFit f = fit_svd(stacked, 2);
  const double err = (raw - reconstruct(f.scores.scores, f.model, true)).squaredNorm();
  EXPECT_NEAR(err / qpsynth::testing::tail_energy(stacked.centered, 2), 1.0, 1e-8);
}

TEST(Reconstruct, RankMismatchIsShapeError) {
  Rng rng(14);
  const SvdFit f = fit_svd(centered(gaussian_matrix(50, 4, rng)), 2);
  EXPECT_THROW(reconstruct(Eigen::MatrixXd::Zero(5, 3), f.model, false), ShapeError);
  EXPECT_THROW(project(Eigen::MatrixXd::Zero(5, 3), f.model), ShapeError);
}

TEST(Project, InvertsReconstruct) {
  Rng rng(15);
  const SvdFit f = fit_svd(centered(gaussian_matrix(60, 5, rng)), 3);
  const Eigen::MatrixXd u = gaussian_matrix(40, 3, rng);
  EXPECT_LT((project(reconstruct(u, f.model, true), f.model) - u).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Project, MeanRowMapsToZero) {
  Rng rng(16);
  Eigen::MatrixXd raw = gaussian_matrix(60, 5, rng).array() + 2.0;
  const SvdFit f = fit_svd(stack_and_center({from_matrix(raw)}), 3);
  const Eigen::MatrixXd row = f.model.column_means.transpose();
  EXPECT_LT(project(row, f.model).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Project, MatchesNormalEquations) {
  Rng rng(17);
  const SvdFit f = fit_svd(centered(gaussian_matrix(80, 6, rng)), 4);
  const Eigen::MatrixXd data = gaussian_matrix(30, 6, rng);
  const Eigen::MatrixXd y = f.model.loadings;
  const Eigen::MatrixXd c = data.rowwise() - f.model.column_means.transpose();
  // least squares: scores minimizing |c - s Y^T|, s = c Y (Y^T Y)^-1
  const Eigen::MatrixXd oracle = (y.transpose() * y).ldlt().solve(y.transpose() * c.transpose()).transpose();
  EXPECT_LT((project(data, f.model) - oracle).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(Project, TinySingularValueIsRankDeficiency) {
  Rng rng(18);
  Eigen::MatrixXd x = gaussian_matrix(50, 1, rng) * gaussian_matrix(1, 4, rng);
  x = centered(x);
  const SvdFit f = fit_svd(x, 2);
  EXPECT_THROW(project(x, f.model), RankDeficiencyError);
}
