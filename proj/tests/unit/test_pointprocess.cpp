#include "oracles.hpp"
#include "qpsynth/errors.hpp"
#include "qpsynth/pointprocess.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace qpsynth;
namespace t = qpsynth::testing;

namespace {

double integral(const IntensityModel& m, double a, double b) {
  return t::simpson([&](double x) { return intensity_at(m, x); }, a, b, 20000);
}

// Exp(1) cdf for the rescaled gaps.
double exp_cdf(double x) { return x <= 0 ? 0.0 : 1.0 - std::exp(-x); }

// Runs laid end to end form one unit-rate process after rescaling, so the
// gap spanning two runs is kept. Dropping it per run would bias the gaps short.
class RescaledGaps {
 public:
  RescaledGaps(const IntensityModel& m, double duration)
      : m_(m), total_(t::simpson([&](double x) { return intensity_at(m, x); }, 0.0, duration, 20000)) {}

  void add_run(const std::vector<double>& events) {
    for (double e : events) {
      const double at = offset_ + t::simpson([&](double x) { return intensity_at(m_, x); }, 0.0, e, 2000);
      gaps.push_back(at - last_);
      last_ = at;
    }
    offset_ += total_;
  }

  std::vector<double> gaps;

 private:
  const IntensityModel& m_;
  double total_;
  double offset_ = 0.0;
  double last_ = 0.0;
};

}  // namespace

TEST(FitIntensity, EmptyIsZeroEverywhere) {
  const IntensityModel m = fit_intensity({}, 10.0);
  for (double x : {0.0, 1.0, 5.5, 9.99, 23.0}) EXPECT_EQ(intensity_at(m, x), 0.0);
}

TEST(FitIntensity, SingleEventIntegratesToOne) {
  const IntensityModel m = fit_intensity({5.0}, 10.0, 0.5);
  EXPECT_NEAR(integral(m, 0, 10), 1.0, 1e-3);
}

TEST(FitIntensity, SevenEventsIntegrateToSeven) {
  // events near both edges exercise the reflection
  const IntensityModel m = fit_intensity({0.1, 0.4, 2.0, 3.3, 7.0, 9.5, 9.9}, 10.0, 0.5);
  EXPECT_NEAR(integral(m, 0, 10), 7.0, 1e-2);
  EXPECT_NEAR(integrated_intensity(m, 10.0), 7.0, 1e-2);
}

TEST(FitIntensity, ClosedFormIntegralMatchesQuadrature) {
  const IntensityModel m = fit_intensity({0.3, 1.1, 4.0, 4.2, 8.8}, 10.0, 0.5);
  for (double x : {0.5, 2.0, 4.1, 9.7}) EXPECT_NEAR(integrated_intensity(m, x), integral(m, 0, x), 1e-6) << x;
  // The tiled intensity jumps at the horizon and intensity_at(10) is the
  // value after the jump, so each side is integrated on its own.
  EXPECT_NEAR(integrated_intensity(m, 10.0), integral(m, 0, 10.0 - 1e-9), 1e-6);
  EXPECT_NEAR(integrated_intensity(m, 13.5) - integrated_intensity(m, 10.0), integral(m, 10, 13.5), 1e-6);
}

TEST(FitIntensity, SortsEventsAndValidates) {
  const IntensityModel m = fit_intensity({3.0, 1.0, 2.0}, 4.0);
  EXPECT_EQ(m.event_times, (std::vector<double>{1.0, 2.0, 3.0}));
  EXPECT_EQ(m.total_events(), 3u);
  EXPECT_THROW(fit_intensity({4.0}, 4.0), ParameterError);
  EXPECT_THROW(fit_intensity({-0.1}, 4.0), ParameterError);
  EXPECT_THROW(fit_intensity({}, 0.0), ParameterError);
  EXPECT_THROW(fit_intensity({}, 1.0, 0.0), ParameterError);
}

TEST(IntensityAt, PeaksAtEvent) {
  const IntensityModel m = fit_intensity({5.0}, 10.0, 0.5);
  const double peak = intensity_at(m, 5.0);
  for (double x = 0.0; x < 10.0; x += 0.01)
    if (std::abs(x - 5.0) >= 1.5) EXPECT_GE(peak, intensity_at(m, x));
}

TEST(IntensityAt, NonNegative) {
  Rng rng(1);
  std::uniform_real_distribution<double> u(0, 30);
  const IntensityModel m = fit_intensity({0.2, 1.0, 3.0, 6.5, 9.0}, 10.0);
  for (int i = 0; i < 10000; ++i) EXPECT_GE(intensity_at(m, u(rng)), 0.0);
  EXPECT_THROW(intensity_at(m, -1.0), ParameterError);
}

TEST(IntensityAt, TilesBeyondHorizon) {
  Rng rng(2);
  std::uniform_real_distribution<double> u(0, 10);
  const IntensityModel m = fit_intensity({0.2, 1.0, 3.0, 6.5, 9.8}, 10.0);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng);
    EXPECT_NEAR(intensity_at(m, 10.0 + x), intensity_at(m, x), 1e-9);
  }
}

TEST(SampleEvents, ZeroIntensityGivesNothing) {
  Rng rng(3);
  EXPECT_TRUE(sample_events(fit_intensity({}, 10.0), 30.0, rng).empty());
}

TEST(SampleEvents, SortedInsideDurationAndDeterministic) {
  const IntensityModel m = fit_intensity({1.0, 2.0, 5.0, 8.0}, 10.0);
  Rng a(4), b(4);
  const auto ev = sample_events(m, 25.0, a);
  EXPECT_EQ(ev, sample_events(m, 25.0, b));
  EXPECT_TRUE(std::is_sorted(ev.begin(), ev.end()));
  for (double e : ev) {
    EXPECT_GE(e, 0.0);
    EXPECT_LT(e, 25.0);
  }
}

TEST(SampleEvents, UniformModelCountMatchesRate) {
  std::vector<double> events;
  for (int i = 0; i < 100; ++i) events.push_back(0.05 + 0.1 * i);
  const IntensityModel m = fit_intensity(events, 10.0, 0.5);
  const double duration = 7.0;
  const double expected = integrated_intensity(m, duration);
  Rng rng(5);
  double sum = 0.0, sq = 0.0;
  const int runs = 10000;
  for (int r = 0; r < runs; ++r) {
    const double n = static_cast<double>(sample_events(m, duration, rng).size());
    sum += n;
    sq += n * n;
  }
  const double mean = sum / runs;
  const double se = std::sqrt((sq / runs - mean * mean) / runs);
  EXPECT_LT(std::abs(mean - expected), 3 * se) << mean << " vs " << expected;
}

TEST(SampleEvents, ClustersAreLocalized) {
  std::vector<double> events;
  for (int i = 0; i < 5; ++i) events.push_back(2.0 + 0.01 * i), events.push_back(8.0 + 0.01 * i);
  const IntensityModel m = fit_intensity(events, 10.0, 0.3);
  Rng rng(6);
  double near = 0, total = 0;
  for (int r = 0; r < 1000; ++r)
    for (double e : sample_events(m, 10.0, rng)) {
      total += 1;
      near += std::abs(e - 2.02) <= 0.9 || std::abs(e - 8.02) <= 0.9;
    }
  EXPECT_GE(near / total, 0.8);
}

TEST(SampleEvents, CountsFollowPoissonOverHorizon) {
  // Chi-square goodness of fit of the per-run counts against Poisson(N)
  const IntensityModel m = fit_intensity({0.5, 1.5, 4.0, 4.5, 7.0, 9.2}, 10.0);
  const double lambda = integrated_intensity(m, 10.0);
  Rng rng(7);
  const int runs = 10000;
  std::vector<double> observed(13, 0.0);
  for (int r = 0; r < runs; ++r) observed[std::min<std::size_t>(sample_events(m, 10.0, rng).size(), 12)] += 1;
  std::vector<double> expected(13, 0.0);
  double pk = std::exp(-lambda), tail = 1.0;
  for (int k = 0; k < 12; ++k) {
    expected[static_cast<std::size_t>(k)] = runs * pk;
    tail -= pk;
    pk *= lambda / (k + 1);
  }
  expected[12] = runs * tail;
  double chi2 = 0.0;
  for (std::size_t k = 0; k < 13; ++k) chi2 += (observed[k] - expected[k]) * (observed[k] - expected[k]) / expected[k];
  // chi-square with 12 degrees of freedom: P(X > 32.91) = 0.001
  EXPECT_LT(chi2, 32.91);
}

TEST(SampleEvents, TimeRescaledGapsAreExponential) {
  const IntensityModel m = fit_intensity({0.5, 1.0, 1.2, 3.0, 6.0, 6.1, 6.3, 9.0}, 10.0, 0.5);
  Rng rng(8);
  RescaledGaps gaps(m, 10.0);
  for (int r = 0; r < 300; ++r) gaps.add_run(sample_events(m, 10.0, rng));
  EXPECT_GT(t::ks_pvalue(gaps.gaps, exp_cdf), 0.001);
}

TEST(SampleEvents, ScanResolutionDoesNotChangeDistribution) {
  const IntensityModel m = fit_intensity({0.5, 1.0, 1.2, 3.0, 6.0, 6.1, 6.3, 9.0}, 10.0, 0.5);
  Rng rng(9);
  RescaledGaps coarse(m, 10.0), fine(m, 10.0);
  for (int r = 0; r < 300; ++r) {
    coarse.add_run(sample_events(m, 10.0, rng, 1e-3));
    fine.add_run(sample_events(m, 10.0, rng, 1e-4));
  }
  EXPECT_GT(t::ks_pvalue(coarse.gaps, exp_cdf), 0.001);
  EXPECT_GT(t::ks_pvalue(fine.gaps, exp_cdf), 0.001);
  EXPECT_GT(t::ks_two_sample_pvalue(coarse.gaps, fine.gaps), 0.001);
}
