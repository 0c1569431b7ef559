#include "oracles.hpp"
#include "qpsynth/changepoint.hpp"
#include "qpsynth/errors.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace qpsynth;
namespace t = qpsynth::testing;

namespace {

Eigen::VectorXd line_with_noise(Index n, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1e-6);
  Eigen::VectorXd y(n);
  for (Index i = 0; i < n; ++i) y(i) = 2.0 * static_cast<double>(i) + 3.0 + g(rng);
  return y;
}

}  // namespace

TEST(Kpss, ExactLineIsNotRejected) {
  // Detrended, this is the iid null, so the non-reject rate sits just above
  // 95%. 100 draws put a standard error of 2% on it; 10000 pin it down.
  Rng rng(1);
  int keep = 0;
  for (int s = 0; s < 10000; ++s) keep += !kpss_statistic(line_with_noise(512, rng)).reject;
  EXPECT_GE(keep, 9500);
}

TEST(Kpss, RandomWalkIsRejected) {
  // Power at n = 512 is about 90.4%. A 90% bar needs the standard error well
  // under that margin: 200000 draws give 0.07%.
  Rng rng(2);
  int rejected = 0;
  for (int s = 0; s < 200000; ++s) rejected += kpss_statistic(t::random_walk(512, rng)).reject;
  EXPECT_GE(rejected, 180000);
}

TEST(Kpss, WhiteNoiseSize) {
  Rng rng(3);
  int rejected = 0;
  for (int s = 0; s < 200; ++s) rejected += kpss_statistic(t::white_noise(512, rng)).reject;
  EXPECT_LE(rejected, 20);
}

TEST(Kpss, TooShortOrConstant) {
  EXPECT_THROW(kpss_statistic(Eigen::VectorXd::Ones(15)), SegmentTooShortError);
  EXPECT_THROW(kpss_statistic(Eigen::VectorXd::Constant(64, 2.0)), DegenerateSignalError);
}

TEST(Kpss, InvariantToAffineTransformsWithTrend) {
  Rng rng(4);
  const Eigen::VectorXd y = t::ar1(400, 0.6, rng);
  Eigen::VectorXd z(400);
  for (Index i = 0; i < 400; ++i) z(i) = -3.5 * y(i) + 12.0 + 0.02 * static_cast<double>(i);
  EXPECT_NEAR(kpss_statistic(y).statistic, kpss_statistic(z).statistic, 1e-8);
}

TEST(Kpss, StatisticMatchesDirectFormula) {
  Rng rng(5);
  const Index n = 200;
  const Eigen::VectorXd y = t::ar1(n, 0.3, rng);
  // OLS on [1, t] via QR, then partial sums and the Bartlett long-run variance
  Eigen::MatrixXd x(n, 2);
  for (Index i = 0; i < n; ++i) x.row(i) << 1.0, static_cast<double>(i);
  const Eigen::VectorXd e = y - x * x.colPivHouseholderQr().solve(y);
  const Index lag = static_cast<Index>(std::floor(12.0 * std::pow(n / 100.0, 0.25)));
  double lrv = e.squaredNorm() / n;
  for (Index l = 1; l <= lag; ++l) {
    double g = 0;
    for (Index i = l; i < n; ++i) g += e(i) * e(i - l);
    lrv += 2.0 * (1.0 - static_cast<double>(l) / (lag + 1.0)) * g / n;
  }
  double ss = 0, s = 0;
  for (Index i = 0; i < n; ++i) ss += (s += e(i)) * s;
  EXPECT_NEAR(kpss_statistic(y).statistic, ss / (double(n) * n * lrv), 1e-10);
}

TEST(Adf, WhiteNoiseIsRejected) {
  Rng rng(6);
  int rejected = 0;
  for (int s = 0; s < 100; ++s) rejected += adf_statistic(t::white_noise(512, rng)).reject;
  EXPECT_GE(rejected, 90);
}

TEST(Adf, RandomWalkIsNotRejected) {
  Rng rng(7);
  int keep = 0;
  for (int s = 0; s < 100; ++s) keep += !adf_statistic(t::random_walk(512, rng)).reject;
  EXPECT_GE(keep, 90);
}

TEST(Adf, FixedLagRuleAlsoMeetsSizeAndPower) {
  Rng rng(8);
  int noise = 0, walk = 0;
  for (int s = 0; s < 100; ++s) {
    noise += adf_statistic(t::white_noise(512, rng), 0.05, LagSelection::fixed).reject;
    walk += !adf_statistic(t::random_walk(512, rng), 0.05, LagSelection::fixed).reject;
  }
  EXPECT_GE(noise, 90);
  EXPECT_GE(walk, 90);
}

TEST(Adf, ConstantIsDegenerate) {
  EXPECT_THROW(adf_statistic(Eigen::VectorXd::Constant(512, 1.0)), DegenerateSignalError);
}

TEST(CriticalValues, FivePercent) {
  EXPECT_DOUBLE_EQ(kpss_critical_value(0.05), 0.146);
  EXPECT_DOUBLE_EQ(adf_critical_value(0.05), -3.41);
  EXPECT_THROW(kpss_critical_value(0.2), ParameterError);
}

TEST(Scan, StationaryAr1HasFewChangepoints) {
  Rng rng(9);
  const StationarityConfig cfg;
  int ok = 0;
  for (int s = 0; s < 50; ++s) {
    const ScanResult r = scan(t::ar1(5120, 0.5, rng), cfg);
    ok += merge_changepoints(r.kpss_cps, r.adf_cps, cfg.merge_tol).points.size() <= 1;
  }
  EXPECT_GE(ok, 45);
}

TEST(Scan, LocalizesRegimeBreak) {
  const StationarityConfig cfg;
  int hit = 0;
  for (int s = 0; s < 50; ++s) {
    const ScanResult r = scan(t::regime_break_series(static_cast<std::uint64_t>(s)), cfg);
    bool found = false;
    for (Index c : merge_changepoints(r.kpss_cps, r.adf_cps, cfg.merge_tol).points) found |= std::abs(c - 2560) <= 256;
    hit += found;
  }
  EXPECT_GE(hit, 45);
}

TEST(Scan, SingleWindowHasNoInteriorPoints) {
  Rng rng(10);
  const StationarityConfig cfg;
  const ScanResult r = scan(t::random_walk(cfg.window, rng), cfg);
  EXPECT_TRUE(r.kpss_cps.empty());
  EXPECT_TRUE(r.adf_cps.empty());
  EXPECT_EQ(detect_changepoints(t::random_walk(cfg.window, rng), cfg).boundaries, (std::vector<Index>{0, 256}));
}

TEST(Scan, ShorterThanWindowIsTooShort) {
  EXPECT_THROW(scan(Eigen::VectorXd::LinSpaced(100, 0, 1), StationarityConfig{}), SegmentTooShortError);
}

TEST(Merge, CloseCandidatesBecomeTheirMidpoint) {
  const auto m = merge_changepoints({1000}, {1200}, 256);
  EXPECT_EQ(m.points, std::vector<Index>{1100});
  EXPECT_EQ(m.sources, std::vector<CpSource>{CpSource::merged});
}

TEST(Merge, DistantCandidatesAreKept) {
  EXPECT_EQ(merge_changepoints({1000}, {2000}, 256).points, (std::vector<Index>{1000, 2000}));
}

TEST(Merge, UnpairedIsRetained) { EXPECT_EQ(merge_changepoints({}, {500}, 256).points, std::vector<Index>{500}); }

TEST(Merge, MidpointRoundsHalfUp) {
  EXPECT_EQ(merge_changepoints({1000}, {1001}, 256).points, std::vector<Index>{1001});
}

TEST(Merge, IsIdempotent) {
  Rng rng(11);
  std::uniform_int_distribution<Index> u(0, 10000);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<Index> a, b;
    for (int i = 0; i < 6; ++i) a.push_back(u(rng)), b.push_back(u(rng));
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const auto once = merge_changepoints(a, b, 256).points;
    EXPECT_EQ(merge_changepoints(once, {}, 256).points, once);
    EXPECT_TRUE(std::is_sorted(once.begin(), once.end()));
  }
}

TEST(EnforceMaxGap, SplitsIntoEqualParts) {
  const ChangepointSet out = enforce_max_gap(ChangepointSet::whole(6000), 2560);
  EXPECT_EQ(out.boundaries, (std::vector<Index>{0, 2000, 4000, 6000}));
  EXPECT_EQ(out.sources, (std::vector<CpSource>{CpSource::forced, CpSource::forced}));
}

TEST(EnforceMaxGap, SmallGapUnchanged) {
  EXPECT_EQ(enforce_max_gap(ChangepointSet::whole(2000), 2560).boundaries, (std::vector<Index>{0, 2000}));
}

TEST(EnforceMaxGap, JustOverInsertsOne) {
  const ChangepointSet out = enforce_max_gap(ChangepointSet::whole(2561), 2560);
  EXPECT_EQ(out.segment_count(), 2);
}

TEST(DetectChangepoints, ResultIsValidAndGapBounded) {
  Rng rng(12);
  const StationarityConfig cfg;
  for (int s = 0; s < 10; ++s) {
    const Eigen::VectorXd x = s % 2 ? t::ar1(9000, 0.5, rng) : t::regime_break_series(static_cast<std::uint64_t>(s));
    const ChangepointSet cps = detect_changepoints(x, cfg);
    EXPECT_NO_THROW(cps.validate());
    EXPECT_EQ(cps.boundaries.front(), 0);
    EXPECT_EQ(cps.boundaries.back(), x.size());
    for (std::size_t k = 1; k < cps.boundaries.size(); ++k)
      EXPECT_LE(cps.boundaries[k] - cps.boundaries[k - 1], cfg.max_gap);
  }
}

TEST(StationarityConfig, Validation) {
  StationarityConfig c;
  EXPECT_NO_THROW(c.validate());
  c.step = 300;
  EXPECT_THROW(c.validate(), ParameterError);
  c = {};
  c.alpha = 1.0;
  EXPECT_THROW(c.validate(), ParameterError);
  c = {};
  c.max_gap = 256;
  EXPECT_THROW(c.validate(), ParameterError);
}

TEST(CpSource, NamesRoundTrip) {
  for (CpSource s : {CpSource::kpss, CpSource::adf, CpSource::merged, CpSource::forced, CpSource::sampled})
    EXPECT_EQ(cp_source_from_string(to_string(s)), s);
  EXPECT_THROW(cp_source_from_string("other"), FormatError);
}
