#include "qpsynth/changepoint.hpp"

#include "qpsynth/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace qpsynth {

namespace {

struct Critical {
  double alpha;
  double kpss;
  double adf;
};

// KPSS (1992) trend case and MacKinnon asymptotic ADF, constant + trend.
constexpr std::array<Critical, 4> kCritical{{
    {0.01, 0.216, -3.96},
    {0.025, 0.176, -3.66},
    {0.05, 0.146, -3.41},
    {0.10, 0.119, -3.12},
}};

const Critical& critical_row(double alpha) {
  for (const auto& c : kCritical)
    if (std::abs(c.alpha - alpha) < 1e-12) return c;
  throw ParameterError("no critical value tabulated for alpha=" + std::to_string(alpha) +
                       " (supported: 0.01, 0.025, 0.05, 0.10)");
}

// Stationarity verdicts for one window, one per test. A degenerate window
// carries no evidence of non-stationarity.
struct WindowVerdict {
  bool kpss_stationary = true;
  bool adf_stationary = true;
};

WindowVerdict judge(const Eigen::Ref<const Eigen::VectorXd>& w, const StationarityConfig& cfg) {
  WindowVerdict v;
  try {
    v.kpss_stationary = !kpss_statistic(w, cfg.alpha).reject;
  } catch (const DegenerateSignalError&) {
  }
  try {
    v.adf_stationary = adf_statistic(w, cfg.alpha, cfg.adf_lags).reject;
  } catch (const DegenerateSignalError&) {
  }
  return v;
}

void push_collapsed(std::vector<Index>& out, Index cp, Index step) {
  if (!out.empty() && cp - out.back() <= step) return;
  out.push_back(cp);
}

}  // namespace

std::string_view to_string(CpSource s) noexcept {
  switch (s) {
    case CpSource::kpss: return "kpss";
    case CpSource::adf: return "adf";
    case CpSource::merged: return "merged";
    case CpSource::forced: return "forced";
    case CpSource::sampled: return "sampled";
  }
  return "unknown";
}

CpSource cp_source_from_string(std::string_view name) {
  if (name == "kpss") return CpSource::kpss;
  if (name == "adf") return CpSource::adf;
  if (name == "merged") return CpSource::merged;
  if (name == "forced") return CpSource::forced;
  if (name == "sampled") return CpSource::sampled;
  throw FormatError("unknown changepoint source '" + std::string(name) + "'");
}

ChangepointSet ChangepointSet::whole(Index length) {
  ChangepointSet s;
  s.boundaries = {0, length};
  return s;
}

ChangepointSet ChangepointSet::from_interior(const std::vector<Index>& interior,
                                             const std::vector<CpSource>& sources, Index length) {
  if (sources.size() != interior.size()) throw ParameterError("one source tag per changepoint required");
  std::vector<std::size_t> order(interior.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return interior[a] < interior[b]; });
  ChangepointSet s;
  s.boundaries.push_back(0);
  for (std::size_t i : order) {
    const Index cp = interior[i];
    if (cp <= 0 || cp >= length || cp == s.boundaries.back()) continue;
    s.boundaries.push_back(cp);
    s.sources.push_back(sources[i]);
  }
  s.boundaries.push_back(length);
  return s;
}

std::vector<Index> ChangepointSet::interior() const {
  if (boundaries.size() < 2) return {};
  return {boundaries.begin() + 1, boundaries.end() - 1};
}

void ChangepointSet::validate() const {
  if (boundaries.size() < 2) throw DataError("changepoint set needs at least {0, T}");
  if (boundaries.front() != 0) throw DataError("changepoint set must start at 0");
  for (std::size_t i = 1; i < boundaries.size(); ++i)
    if (boundaries[i] <= boundaries[i - 1]) throw DataError("changepoints must be strictly increasing");
  if (sources.size() + 2 != boundaries.size()) throw DataError("changepoint source tags do not match");
}

void StationarityConfig::validate() const {
  if (step <= 0 || step > window) throw ParameterError("require 0 < step <= window");
  if (!(alpha > 0 && alpha < 1)) throw ParameterError("require 0 < alpha < 1");
  if (max_gap <= window) throw ParameterError("require max_gap > window");
  if (merge_tol < 0) throw ParameterError("merge_tol must be nonnegative");
  if (confirm < 1) throw ParameterError("confirm must be at least 1");
  critical_row(alpha);
}

Index schwert_lag(Index n) {
  return static_cast<Index>(std::floor(12.0 * std::pow(static_cast<double>(n) / 100.0, 0.25)));
}

double kpss_critical_value(double alpha) { return critical_row(alpha).kpss; }
double adf_critical_value(double alpha) { return critical_row(alpha).adf; }

TestResult kpss_statistic(const Eigen::Ref<const Eigen::VectorXd>& y, double alpha) {
  const Index n = y.size();
  if (n < 16) throw SegmentTooShortError("KPSS needs at least 16 points, got " + std::to_string(n));
  const double crit = kpss_critical_value(alpha);

  // Closed-form OLS on [1, t] with t centred for conditioning.
  const double tc = 0.5 * static_cast<double>(n - 1);
  double stt = 0, sty = 0;
  const double ybar = y.mean();
  for (Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) - tc;
    stt += t * t;
    sty += t * (y(i) - ybar);
  }
  const double slope = sty / stt;
  Eigen::VectorXd e(n);
  for (Index i = 0; i < n; ++i) e(i) = y(i) - ybar - slope * (static_cast<double>(i) - tc);

  const double scale = std::max(y.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  const double gamma0 = e.squaredNorm() / static_cast<double>(n);
  if (!(std::sqrt(gamma0) > 1e-11 * scale)) throw DegenerateSignalError("KPSS: residual variance is zero");

  const Index lags = std::min(schwert_lag(n), n - 1);
  double lrv = gamma0;
  for (Index l = 1; l <= lags; ++l) {
    const double w = 1.0 - static_cast<double>(l) / static_cast<double>(lags + 1);
    const double gamma = e.tail(n - l).dot(e.head(n - l)) / static_cast<double>(n);
    lrv += 2.0 * w * gamma;
  }
  if (!(lrv > 0)) throw DegenerateSignalError("KPSS: long-run variance is not positive");

  double partial = 0, sum_sq = 0;
  for (Index i = 0; i < n; ++i) {
    partial += e(i);
    sum_sq += partial * partial;
  }
  TestResult r;
  r.statistic = sum_sq / (static_cast<double>(n) * static_cast<double>(n) * lrv);
  r.reject = r.statistic > crit;
  return r;
}

namespace {

struct AdfFit {
  double t_stat = 0.0;
  double aic = 0.0;
};

// OLS of dy_t on [1, t, y_{t-1}, dy_{t-1..t-lags}] over t = first .. n-1.
AdfFit adf_regression(const Eigen::Ref<const Eigen::VectorXd>& y, Index lags, Index first) {
  const Index n = y.size();
  const Index nobs = n - first;
  const Index k = 3 + lags;
  Eigen::MatrixXd x(nobs, k);
  Eigen::VectorXd dy(nobs);
  for (Index row = 0; row < nobs; ++row) {
    const Index t = first + row;
    dy(row) = y(t) - y(t - 1);
    x(row, 0) = 1.0;
    x(row, 1) = static_cast<double>(row + 1);
    x(row, 2) = y(t - 1);
    for (Index j = 1; j <= lags; ++j) x(row, 2 + j) = y(t - j) - y(t - j - 1);
  }

  // Unit-norm columns keep the rank threshold meaningful across scales.
  const Eigen::VectorXd norms = x.colwise().norm().transpose();
  for (Index j = 0; j < k; ++j) {
    if (!(norms(j) > 0)) throw DegenerateSignalError("ADF: regressor column " + std::to_string(j) + " is zero");
    x.col(j) /= norms(j);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < k) throw DegenerateSignalError("ADF: regressor matrix is rank deficient");

  const Eigen::VectorXd beta = qr.solve(dy);
  const double ssr = (dy - x * beta).squaredNorm();
  const double s2 = ssr / static_cast<double>(nobs - k);

  const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd rinv = r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
  Index pos = 0;
  for (Index j = 0; j < k; ++j)
    if (qr.colsPermutation().indices()(j) == 2) pos = j;
  const double se = std::sqrt(s2 * rinv.row(pos).squaredNorm());
  if (!(se > 0) || !std::isfinite(se)) throw DegenerateSignalError("ADF: zero standard error");

  AdfFit fit;
  fit.t_stat = beta(2) / se;
  const double dn = static_cast<double>(nobs);
  const double loglik = -0.5 * dn * (std::log(2.0 * std::numbers::pi) + std::log(ssr / dn) + 1.0);
  fit.aic = -2.0 * loglik + 2.0 * static_cast<double>(k);
  return fit;
}

}  // namespace

TestResult adf_statistic(const Eigen::Ref<const Eigen::VectorXd>& y, double alpha, LagSelection lags) {
  const Index n = y.size();
  const Index p = schwert_lag(n);
  if (n < p + 16) {
    throw SegmentTooShortError("ADF needs at least " + std::to_string(p + 16) + " points, got " +
                               std::to_string(n));
  }
  const double crit = adf_critical_value(alpha);

  Index order = p;
  if (lags == LagSelection::aic) {
    // Every candidate order is compared on the common sample t = p+1 .. n-1,
    // then the chosen order is refitted on its full sample.
    double best = std::numeric_limits<double>::infinity();
    for (Index q = 0; q <= p; ++q) {
      const double aic = adf_regression(y, q, p + 1).aic;
      if (aic < best) {
        best = aic;
        order = q;
      }
    }
  }
  TestResult out;
  out.statistic = adf_regression(y, order, order + 1).t_stat;
  out.reject = out.statistic < crit;
  return out;
}

ScanResult scan(const Eigen::Ref<const Eigen::VectorXd>& series, const StationarityConfig& cfg) {
  cfg.validate();
  const Index n = series.size();
  if (n < cfg.window) {
    throw SegmentTooShortError("series of length " + std::to_string(n) + " is shorter than one window (" +
                               std::to_string(cfg.window) + ")");
  }
  std::vector<WindowVerdict> verdicts;
  for (Index a = 0; a + cfg.window <= n; a += cfg.step) verdicts.push_back(judge(series.segment(a, cfg.window), cfg));

  // Window i emits when i-1 is stationary and i .. i+confirm-1 are not.
  auto emit = [&](auto stationary, std::vector<Index>& out) {
    const auto count = static_cast<Index>(verdicts.size());
    for (Index i = 1; i + cfg.confirm - 1 < count; ++i) {
      if (!stationary(verdicts[static_cast<std::size_t>(i - 1)])) continue;
      bool flipped = true;
      for (Index q = 0; q < cfg.confirm && flipped; ++q) flipped = !stationary(verdicts[static_cast<std::size_t>(i + q)]);
      if (flipped) push_collapsed(out, i * cfg.step + cfg.window / 2, cfg.step);
    }
  };
  ScanResult out;
  emit([](const WindowVerdict& v) { return v.kpss_stationary; }, out.kpss_cps);
  emit([](const WindowVerdict& v) { return v.adf_stationary; }, out.adf_cps);
  return out;
}

MergedChangepoints merge_changepoints(const std::vector<Index>& kpss, const std::vector<Index>& adf,
                                      Index tol) {
  MergedChangepoints out;
  std::size_t i = 0, j = 0;
  auto emit = [&](Index cp, CpSource src) {
    if (!out.points.empty() && out.points.back() == cp) {
      if (out.sources.back() != src) out.sources.back() = CpSource::merged;
      return;
    }
    out.points.push_back(cp);
    out.sources.push_back(src);
  };
  while (i < kpss.size() || j < adf.size()) {
    if (j == adf.size()) {
      emit(kpss[i++], CpSource::kpss);
    } else if (i == kpss.size()) {
      emit(adf[j++], CpSource::adf);
    } else if (std::abs(kpss[i] - adf[j]) <= tol) {
      // Round half up: floor((a + b) / 2 + 1/2).
      const Index sum = kpss[i] + adf[j];
      const Index mid = sum >= 0 ? (sum + 1) / 2 : -((-sum) / 2);
      emit(mid, CpSource::merged);
      ++i;
      ++j;
    } else if (kpss[i] < adf[j]) {
      emit(kpss[i++], CpSource::kpss);
    } else {
      emit(adf[j++], CpSource::adf);
    }
  }
  // Midpoints can land before an earlier unpaired point; restore order.
  std::vector<std::size_t> order(out.points.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return out.points[a] < out.points[b]; });
  MergedChangepoints sorted;
  for (std::size_t k : order) {
    if (!sorted.points.empty() && sorted.points.back() == out.points[k]) {
      sorted.sources.back() = CpSource::merged;
      continue;
    }
    sorted.points.push_back(out.points[k]);
    sorted.sources.push_back(out.sources[k]);
  }
  return sorted;
}

ChangepointSet enforce_max_gap(const ChangepointSet& cps, Index max_gap) {
  if (max_gap < 1) throw ParameterError("max_gap must be positive");
  cps.validate();
  ChangepointSet out;
  out.boundaries.push_back(cps.boundaries.front());
  for (std::size_t i = 1; i < cps.boundaries.size(); ++i) {
    const Index lo = cps.boundaries[i - 1];
    const Index hi = cps.boundaries[i];
    const Index gap = hi - lo;
    if (gap > max_gap) {
      const Index parts = (gap + max_gap - 1) / max_gap;
      for (Index q = 1; q < parts; ++q) {
        out.boundaries.push_back(lo + gap * q / parts);
        out.sources.push_back(CpSource::forced);
      }
    }
    out.boundaries.push_back(hi);
    if (i + 1 < cps.boundaries.size()) out.sources.push_back(cps.sources[i - 1]);
  }
  return out;
}

ChangepointSet detect_changepoints(const Eigen::Ref<const Eigen::VectorXd>& series,
                                   const StationarityConfig& cfg) {
  const ScanResult found = scan(series, cfg);
  const MergedChangepoints merged = merge_changepoints(found.kpss_cps, found.adf_cps, cfg.merge_tol);
  const ChangepointSet set = ChangepointSet::from_interior(merged.points, merged.sources, series.size());
  return enforce_max_gap(set, cfg.max_gap);
}

}  // namespace qpsynth
