#include "qpsynth/errors.hpp"
#include "qpsynth/gp.hpp"

#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace qpsynth {

namespace {

struct StartResult {
  FitCandidate initial;
  FitCandidate optimized;
};

// Adam ascent on the per-point log-likelihood; returns the best iterate.
// Stored logliks are summed over the subsample.
StartResult run_start(const KernelHyperparams& start, int index, const Eigen::VectorXd& t, const Eigen::VectorXd& y,
                      const FitConfig& cfg) {
  const double m = static_cast<double>(t.size());
  StartResult out;
  out.initial.params = start;
  out.initial.start = index;
  out.optimized = out.initial;
  out.optimized.optimized = true;

  Eigen::Vector4d theta = start.log_params();
  Eigen::Vector4d mom = Eigen::Vector4d::Zero();
  Eigen::Vector4d vel = Eigen::Vector4d::Zero();
  double b1 = 1.0, b2 = 1.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    LmlResult r;
    KernelHyperparams p = KernelHyperparams::from_log(theta, start.noise_var);
    try {
      r = log_marginal_likelihood_with_gradient(p, t, y);
    } catch (const Error&) {
      break;
    }
    if (!std::isfinite(r.value) || !r.gradient.allFinite()) break;
    if (epoch == 0) out.initial.fit_loglik = r.value;
    if (r.value > out.optimized.fit_loglik) {
      out.optimized.fit_loglik = r.value;
      out.optimized.params = p;
    }
    const Eigen::Vector4d g = r.gradient / m;
    b1 *= cfg.adam_beta1;
    b2 *= cfg.adam_beta2;
    mom = cfg.adam_beta1 * mom + (1.0 - cfg.adam_beta1) * g;
    vel = cfg.adam_beta2 * vel + (1.0 - cfg.adam_beta2) * g.cwiseAbs2();
    const Eigen::Vector4d mhat = mom / (1.0 - b1);
    const Eigen::Vector4d vhat = vel / (1.0 - b2);
    theta += cfg.learning_rate * (mhat.array() / (vhat.array().sqrt() + 1e-8)).matrix();
  }
  out.initial.loglik = out.initial.fit_loglik;
  out.optimized.loglik = out.optimized.fit_loglik;
  return out;
}

Index subsample_size(double frac, Index n) {
  return std::clamp<Index>(static_cast<Index>(std::llround(frac * static_cast<double>(n))), 2, n);
}

// m distinct indices in increasing order, as (times in s, values).
std::pair<Eigen::VectorXd, Eigen::VectorXd> draw_subsample(const Eigen::VectorXd& y, double fs, Index m, Rng& rng) {
  std::vector<Index> all(static_cast<std::size_t>(y.size()));
  std::iota(all.begin(), all.end(), Index{0});
  std::vector<Index> pick;
  pick.reserve(static_cast<std::size_t>(m));
  std::sample(all.begin(), all.end(), std::back_inserter(pick), m, rng);
  Eigen::VectorXd t(m), v(m);
  for (Index i = 0; i < m; ++i) {
    t(i) = static_cast<double>(pick[static_cast<std::size_t>(i)]) / fs;
    v(i) = y(pick[static_cast<std::size_t>(i)]);
  }
  return {t, v};
}

}  // namespace

void FitConfig::validate() const {
  if (!(subsample_frac > 0 && subsample_frac <= 1)) throw ParameterError("subsample_frac must be in (0, 1]");
  if (!(selection_frac >= 0 && selection_frac <= 1)) throw ParameterError("selection_frac must be in [0, 1]");
  if (epochs < 1) throw ParameterError("epochs must be at least 1");
  if (!(learning_rate > 0)) throw ParameterError("learning_rate must be positive");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1))
    throw ParameterError("Adam betas must be in [0, 1)");
  if (!(jitter >= 0)) throw ParameterError("jitter must be nonnegative");
  if (!(noise_frac >= 0)) throw ParameterError("noise_frac must be nonnegative");
  if (score_samples < 1) throw ParameterError("score_samples must be at least 1");
  if (score_grid < 2) throw ParameterError("score_grid must be at least 2");
  if (!(score_horizon > 0)) throw ParameterError("score_horizon must be positive");
  if (!(admissible_loglik_drop >= 0)) throw ParameterError("admissible_loglik_drop must be nonnegative");
  for (const Band& b : bands)
    if (!(b.lo >= 0 && b.hi > b.lo)) throw ParameterError("band edges must satisfy 0 <= lo < hi");
}

std::vector<KernelHyperparams> initial_grid(double variance, double noise_var) {
  // ell_m is a time scale; the sd-relative starts are taken on the segment in
  // units of its own sd (sd = 1), so the fit does not depend on amplitude.
  const double sd = 1.0;
  std::vector<KernelHyperparams> grid;
  for (double period : {1.0, 4.0, 8.0})
    for (double ell_p : {1.0, 8.0, 16.0})
      for (double ell_m : {sd / 0.1, sd, sd / 10.0}) {
        KernelHyperparams p;
        p.sigma_f2 = 0.9 * variance;
        p.ell_p = ell_p;
        p.period = period;
        p.ell_m = ell_m;
        p.noise_var = noise_var;
        grid.push_back(p);
      }
  return grid;
}

double score_candidate(const KernelHyperparams& params, const Eigen::Ref<const Eigen::VectorXd>& values, double fs,
                       const FitConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (values.size() < 2) throw ParameterError("scoring needs at least 2 segment values");
  const Eigen::VectorXd y = values.array() - values.mean();
  const Index g = cfg.score_grid;
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(g, 0.0, cfg.score_horizon);
  const double grid_fs = static_cast<double>(g - 1) / cfg.score_horizon;
  const Eigen::VectorXd target = relative_band_power(y, fs, cfg.bands);

  const Eigen::MatrixXd l = covariance_factor(params, grid, cfg.jitter);
  Rng rng = make_rng(seed, {stage::kScore});
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd z(g, cfg.score_samples);
  for (Index c = 0; c < z.cols(); ++c)
    for (Index r = 0; r < g; ++r) z(r, c) = gauss(rng);
  const Eigen::MatrixXd paths = l.triangularView<Eigen::Lower>() * z;

  std::vector<double> per_path(static_cast<std::size_t>(cfg.score_samples));
  const double terms = static_cast<double>(cfg.bands.size() + 1);
  detail::parallel_for(per_path.size(), [&](std::size_t s) {
    const auto q = paths.col(static_cast<Index>(s));
    const double band = (relative_band_power(q, grid_fs, cfg.bands) - target).cwiseAbs().sum();
    per_path[s] = (band + ks_statistic(q, y)) / terms;
  });
  return std::accumulate(per_path.begin(), per_path.end(), 0.0) / static_cast<double>(per_path.size());
}

SegmentModel fit_segment(const Eigen::Ref<const Eigen::VectorXd>& values, double fs, const FitConfig& cfg,
                         std::uint64_t seed, FitTrace* trace) {
  cfg.validate();
  const Index n = values.size();
  if (n < 16) throw SegmentTooShortError("segment fit needs at least 16 values, got " + std::to_string(n));
  if (!(fs > 0)) throw ParameterError("fs must be positive");
  if (!values.allFinite()) throw DataError("segment contains non-finite values");

  const double mean = values.mean();
  const Eigen::VectorXd y = values.array() - mean;
  const double variance = y.squaredNorm() / static_cast<double>(n);
  const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
  if (!(std::sqrt(variance) > 1e-12 * scale)) throw DegenerateSignalError("segment has zero variance");
  const double noise_var = cfg.noise_frac * variance;

  const Index m = subsample_size(cfg.subsample_frac, n);
  Rng rng = make_rng(seed, {stage::kFit});
  const auto [ts, ys] = draw_subsample(y, fs, m, rng);

  const std::vector<KernelHyperparams> starts = initial_grid(variance, noise_var);
  std::vector<StartResult> results(starts.size());
  detail::parallel_for(starts.size(), [&](std::size_t i) {
    results[i] = run_start(starts[i], static_cast<int>(i), ts, ys, cfg);
  });

  FitTrace local;
  FitTrace& tr = trace ? *trace : local;
  tr.candidates.clear();
  for (const auto& r : results)
    for (const FitCandidate& c : {r.initial, r.optimized}) tr.candidates.push_back(c);

  // Admissibility is judged on a fresh, larger subsample.
  if (cfg.selection_frac > 0) {
    Rng sel_rng = make_rng(seed, {stage::kFit, 1});
    const auto [tsel, ysel] = draw_subsample(y, fs, subsample_size(cfg.selection_frac, n), sel_rng);
    detail::parallel_for(tr.candidates.size(), [&](std::size_t i) {
      FitCandidate& c = tr.candidates[i];
      if (!std::isfinite(c.fit_loglik)) return;
      try {
        c.loglik = log_marginal_likelihood(c.params, tsel, ysel);
      } catch (const Error&) {
        c.loglik = -std::numeric_limits<double>::infinity();
      }
    });
  }
  double best_ll = -std::numeric_limits<double>::infinity();
  for (const FitCandidate& c : tr.candidates) best_ll = std::max(best_ll, c.loglik);
  if (!std::isfinite(best_ll)) throw FitError("every hyperparameter start failed to factorize");

  const std::uint64_t score_seed = derive_seed(seed, {stage::kScore});
  std::vector<std::size_t> admissible;
  for (std::size_t i = 0; i < tr.candidates.size(); ++i)
    if (std::isfinite(tr.candidates[i].loglik) && tr.candidates[i].loglik >= best_ll - cfg.admissible_loglik_drop)
      admissible.push_back(i);
  for (std::size_t i : admissible) {
    try {
      tr.candidates[i].score = score_candidate(tr.candidates[i].params, y, fs, cfg, score_seed);
    } catch (const NumericalError&) {
      tr.candidates[i].score = std::numeric_limits<double>::infinity();
    }
  }

  std::size_t chosen = admissible.front();
  for (std::size_t i : admissible)
    if (tr.candidates[i].score < tr.candidates[chosen].score) chosen = i;
  if (!std::isfinite(tr.candidates[chosen].score)) throw FitError("no admissible candidate could be scored");
  tr.selected = chosen;

  SegmentModel out;
  out.begin = 0;
  out.end = n;
  out.params = tr.candidates[chosen].params;
  out.fit_score = tr.candidates[chosen].score;
  out.mean = mean;
  return out;
}

}  // namespace qpsynth
