#pragma once

#include "qpsynth/ingest.hpp"

#include <Eigen/Dense>

#include <string_view>
#include <vector>

namespace qpsynth {

/// `sampled` marks changepoints drawn during generation.
enum class CpSource { kpss, adf, merged, forced, sampled };

std::string_view to_string(CpSource s) noexcept;
/// Throws FormatError on an unknown name.
CpSource cp_source_from_string(std::string_view name);

/// Boundaries 0 = b_0 < b_1 < ... < b_{K+1} = T; one tag per interior boundary.
struct ChangepointSet {
  std::vector<Index> boundaries;
  std::vector<CpSource> sources;

  /// The trivial set {0, T}.
  static ChangepointSet whole(Index length);
  /// Adds 0 and `length` around sorted interior points; drops points outside
  /// (0, length) and duplicates.
  static ChangepointSet from_interior(const std::vector<Index>& interior,
                                      const std::vector<CpSource>& sources, Index length);

  Index length() const { return boundaries.empty() ? 0 : boundaries.back(); }
  Index segment_count() const { return static_cast<Index>(boundaries.size()) - 1; }
  std::vector<Index> interior() const;
  /// Throws DataError unless the invariants hold.
  void validate() const;
};

/// ADF lag order: the Schwert maximum itself, or the AIC-best order in
/// 0..maximum.
enum class LagSelection { aic, fixed };

struct StationarityConfig {
  Index window = 256;
  Index step = 128;
  double alpha = 0.05;
  Index max_gap = 2560;
  Index merge_tol = 256;
  LagSelection adf_lags = LagSelection::aic;
  /// Consecutive non-stationary windows needed to confirm a flip.
  Index confirm = 2;

  /// Throws ParameterError unless 0 < step <= window, 0 < alpha < 1 and
  /// max_gap > window.
  void validate() const;
};

struct TestResult {
  double statistic = 0.0;
  bool reject = false;
};

/// Schwert lag rule floor(12 * (n/100)^(1/4)).
Index schwert_lag(Index n);

/// Trend-case critical values at alpha in {0.01, 0.025, 0.05, 0.10};
/// anything else throws ParameterError. At 5%: KPSS 0.146, ADF -3.41.
double kpss_critical_value(double alpha);
double adf_critical_value(double alpha);

/// KPSS test of trend stationarity. Residuals of an OLS fit on [1, t], a
/// Bartlett long-run variance with the Schwert lag.
/// Throws SegmentTooShortError for n < 16 and DegenerateSignalError when the
/// residual variance vanishes.
TestResult kpss_statistic(const Eigen::Ref<const Eigen::VectorXd>& series, double alpha = 0.05);

/// Augmented Dickey-Fuller test with constant and trend. p is the Schwert
/// lag; with LagSelection::aic the order is chosen in 0..p by AIC on a common
/// sample. The statistic is the t-ratio of y_{t-1}. Throws
/// SegmentTooShortError for n < p + 16 and DegenerateSignalError when the
/// regressors are rank deficient.
TestResult adf_statistic(const Eigen::Ref<const Eigen::VectorXd>& series, double alpha = 0.05,
                         LagSelection lags = LagSelection::aic);

struct ScanResult {
  std::vector<Index> kpss_cps;
  std::vector<Index> adf_cps;
};

/// Sliding-window scan with windows [a, a + window), a = 0, step, ...
/// Each test keeps its own list. A changepoint is emitted at the midpoint of
/// the first non-stationary window after a stationary one, provided the next
/// confirm - 1 windows are non-stationary as well.
ScanResult scan(const Eigen::Ref<const Eigen::VectorXd>& series, const StationarityConfig& cfg);

struct MergedChangepoints {
  std::vector<Index> points;
  std::vector<CpSource> sources;
};

/// Greedy left-to-right pairing: a KPSS and an ADF point within tol are
/// replaced by their rounded midpoint; everything else is kept.
MergedChangepoints merge_changepoints(const std::vector<Index>& kpss_cps,
                                      const std::vector<Index>& adf_cps, Index tol);

/// Splits each gap longer than max_gap into ceil(gap / max_gap) equal parts.
ChangepointSet enforce_max_gap(const ChangepointSet& cps, Index max_gap);

/// scan, merge and enforce_max_gap over one score column.
ChangepointSet detect_changepoints(const Eigen::Ref<const Eigen::VectorXd>& series,
                                   const StationarityConfig& cfg);

}  // namespace qpsynth
