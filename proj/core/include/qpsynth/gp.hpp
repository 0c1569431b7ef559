#pragma once

#include "qpsynth/ingest.hpp"
#include "qpsynth/random.hpp"
#include "qpsynth/spectral.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <limits>
#include <vector>

namespace qpsynth {

/// Quasi-periodic kernel parameters. Times are in seconds.
struct KernelHyperparams {
  double sigma_f2 = 1.0;   // signal variance
  double ell_p = 1.0;      // periodic lengthscale, dimensionless
  double period = 1.0;     // s
  double ell_m = 1.0;      // Matern-3/2 lengthscale, s
  double noise_var = 0.0;  // observation noise variance

  bool valid() const noexcept;
  /// Throws ParameterError unless valid().
  void validate() const;

  /// (log sigma_f2, log ell_p, log period, log ell_m).
  Eigen::Vector4d log_params() const;
  static KernelHyperparams from_log(const Eigen::Vector4d& theta, double noise_var);

  friend bool operator==(const KernelHyperparams&, const KernelHyperparams&) = default;
};

/// k(t, t') = sigma_f2 * exp(-2 sin^2(pi |t - t'| / p) / ell_p^2)
///            * (1 + sqrt3 |t - t'| / ell_m) * exp(-sqrt3 |t - t'| / ell_m)
double kernel_eval(const KernelHyperparams& params, double t, double t2);
double kernel_at_lag(const KernelHyperparams& params, double tau);

/// Kernel matrix over a grid with jitter * sigma_f2 added to the diagonal.
/// The matrix is checked with a Cholesky factorization; on failure the jitter
/// grows tenfold up to 1e-1 before NumericalError is thrown.
Eigen::MatrixXd covariance_matrix(const KernelHyperparams& params, const Eigen::Ref<const Eigen::VectorXd>& grid,
                                  double jitter);

/// Lower Cholesky factor of covariance_matrix with the same escalation.
Eigen::MatrixXd covariance_factor(const KernelHyperparams& params, const Eigen::Ref<const Eigen::VectorXd>& grid,
                                  double jitter);

struct LmlResult {
  double value = 0.0;
  /// d value / d log(sigma_f2, ell_p, period, ell_m).
  Eigen::Vector4d gradient = Eigen::Vector4d::Zero();
};

/// -1/2 y^T (K + noise I)^-1 y - 1/2 log det(K + noise I) - n/2 log 2 pi.
/// Throws ParameterError for n < 2 and NumericalError when K + noise I is not
/// positive definite.
double log_marginal_likelihood(const KernelHyperparams& params, const Eigen::Ref<const Eigen::VectorXd>& times,
                               const Eigen::Ref<const Eigen::VectorXd>& values);
LmlResult log_marginal_likelihood_with_gradient(const KernelHyperparams& params,
                                                const Eigen::Ref<const Eigen::VectorXd>& times,
                                                const Eigen::Ref<const Eigen::VectorXd>& values);

struct FitConfig {
  double subsample_frac = 0.2;
  /// Fraction of points in the fresh subsample on which candidate
  /// likelihoods are compared; 0 reuses the fitting subsample.
  double selection_frac = 0.2;
  int epochs = 150;
  double learning_rate = 0.1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double jitter = 1e-3;
  /// Observation noise as a fraction of the segment variance.
  double noise_frac = 0.1;
  int score_samples = 2500;
  Index score_grid = 2560;
  double score_horizon = 10.0;  // s
  std::vector<Band> bands = default_bands();
  /// Candidates whose subsample log-likelihood trails the best by more than
  /// this are not scored. chi2_4(0.95)/2; infinity scores every candidate.
  double admissible_loglik_drop = 4.744;

  /// Throws ParameterError on out-of-range fields.
  void validate() const;
};

struct SegmentModel {
  /// Half-open sample range [begin, end) within the sample's score column.
  Index begin = 0;
  Index end = 0;
  KernelHyperparams params;
  double fit_score = 0.0;
  /// Segment mean removed before fitting.
  double mean = 0.0;
  Index component = 0;
  Index sample = 0;

  Index length() const noexcept { return end - begin; }
  friend bool operator==(const SegmentModel&, const SegmentModel&) = default;
};

/// Everything fit_segment considered, for inspection and tests.
struct FitCandidate {
  KernelHyperparams params;
  double fit_loglik = -std::numeric_limits<double>::infinity();  // on the fitting subsample
  double loglik = -std::numeric_limits<double>::infinity();      // on the selection subsample
  double score = std::numeric_limits<double>::infinity();    // +inf when not admissible
  bool optimized = false;
  int start = 0;
};

struct FitTrace {
  std::vector<FitCandidate> candidates;
  std::size_t selected = 0;
};

/// The 27 grid starts: sigma_f2 = 0.9 var, period in {1, 4, 8} s, ell_p in
/// {1, 8, 16}, ell_m in {10, 1, 0.1} s (sd/0.1, sd, sd/10 with the segment
/// measured in its own sd, which keeps the starts independent of amplitude).
std::vector<KernelHyperparams> initial_grid(double variance, double noise_var);

/// Multi-start fit of one segment (values sampled at fs). Each start runs
/// Adam in log space on the per-point marginal log-likelihood of a random
/// subsample, keeping the best iterate. Starts and optima form the candidate
/// set; candidates whose likelihood on a second subsample is within
/// admissible_loglik_drop of the best are scored and the lowest score wins.
/// Deterministic in seed.
/// Throws SegmentTooShortError for fewer than 16 values,
/// DegenerateSignalError for zero variance and FitError if every start fails.
SegmentModel fit_segment(const Eigen::Ref<const Eigen::VectorXd>& values, double fs, const FitConfig& cfg,
                         std::uint64_t seed, FitTrace* trace = nullptr);

/// Mean over cfg.score_samples prior paths (drawn on cfg.score_grid points of
/// [0, score_horizon]) of the average of |delta relative band power| per band
/// and the KS statistic against the segment values. Paths depend only on the
/// seed, so equal seeds give common random numbers across candidates.
double score_candidate(const KernelHyperparams& params, const Eigen::Ref<const Eigen::VectorXd>& values, double fs,
                       const FitConfig& cfg, std::uint64_t seed);

/// Zero-mean draw with covariance covariance_matrix(params, grid, jitter).
Eigen::VectorXd sample_path(const KernelHyperparams& params, const Eigen::Ref<const Eigen::VectorXd>& grid, Rng& rng,
                            double jitter = 1e-3);

/// Draw from the prior conditioned on f(t0) = y0 (pathwise update of a joint
/// prior draw). Requires t0 <= grid(0). When grid(0) == t0 the first value is
/// exactly y0.
Eigen::VectorXd sample_path_conditional(const KernelHyperparams& params, const Eigen::Ref<const Eigen::VectorXd>& grid,
                                        double t0, double y0, Rng& rng, double jitter = 1e-3);

/// Evenly spaced times i / fs for i in [0, n).
Eigen::VectorXd sample_times(Index n, double fs);

}  // namespace qpsynth
