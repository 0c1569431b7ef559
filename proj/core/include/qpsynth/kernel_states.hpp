#pragma once

#include "qpsynth/gp.hpp"
#include "qpsynth/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace qpsynth {

enum class DivergenceMode { jeffreys, monte_carlo_js };

struct DivergenceConfig {
  Index grid_size = 128;
  double horizon = 10.0;  // s
  double jitter = 1e-3;
  DivergenceMode mode = DivergenceMode::jeffreys;
  /// Draws per measure for the Monte-Carlo JS estimate.
  int mc_samples = 2000;
  std::uint64_t seed = 0;

  Eigen::VectorXd grid() const;
  /// Throws ParameterError on out-of-range fields.
  void validate() const;
};

/// Jeffreys divergence 1/2 [KL(a||b) + KL(b||a)] between N(0, S_a) and
/// N(0, S_b). Symmetric by construction and exactly 0 for equal matrices.
double jeffreys_divergence(const Eigen::MatrixXd& cov_a, const Eigen::MatrixXd& cov_b);

/// Monte-Carlo Jensen-Shannon divergence between the same two Gaussians.
double js_divergence_mc(const Eigen::MatrixXd& cov_a, const Eigen::MatrixXd& cov_b, int samples, Rng& rng);

/// Divergence between the zero-mean Gaussian measures of two kernels on
/// cfg.grid(). Noise variance is left out of both covariances. Equal params
/// give 0 and swapping arguments gives exactly the same value.
double gaussian_divergence(const KernelHyperparams& a, const KernelHyperparams& b, const DivergenceConfig& cfg);

/// Symmetric J x J matrix with zero diagonal. Throws ParameterError for
/// J < 2; factorization failures name the offending pair.
Eigen::MatrixXd pairwise_divergences(const std::vector<KernelHyperparams>& params, const DivergenceConfig& cfg);

/// Average-linkage agglomeration down to exactly m clusters. Among equal
/// linkages the pair with the lowest (i, j) merges first. Labels are 0-based
/// and numbered by each cluster's smallest member.
std::vector<Index> cluster(const Eigen::MatrixXd& dissimilarity, Index m);

/// Member of cluster_id with the smallest summed dissimilarity to the other
/// members; ties go to the lower index. Throws ParameterError when empty.
Index medoid(const Eigen::MatrixXd& dissimilarity, const std::vector<Index>& labels, Index cluster_id);

struct Transitions {
  Eigen::MatrixXd p;    // M x M, row-stochastic
  Eigen::VectorXd pi0;  // M
};

/// Pooled transition counts, row-normalized. A state with no outgoing
/// transitions gets the pooled empirical state marginal as its row. States
/// are 0-based. Throws ParameterError on empty input or out-of-range states.
Transitions estimate_transitions(const std::vector<std::vector<Index>>& sequences, Index m);

struct KernelStateLibrary {
  std::vector<KernelHyperparams> medoids;
  Eigen::MatrixXd transition;
  Eigen::VectorXd initial;
  /// State of every fitted segment, aligned with PatientModel::segments.
  std::vector<Index> labels;
  Eigen::VectorXd divergence_grid;

  Index states() const noexcept { return static_cast<Index>(medoids.size()); }
  /// Throws DataError unless the invariants hold.
  void validate() const;
};

/// First state from initial, then rows of transition. Throws ParameterError
/// for length < 1.
std::vector<Index> sample_state_sequence(const KernelStateLibrary& library, Index length, Rng& rng);

/// Divergences, clustering to min(m, J) states, medoids and pooled
/// transitions. `sequences` index into `params`, one list per (sample,
/// component) in time order.
KernelStateLibrary build_state_library(const std::vector<KernelHyperparams>& params,
                                       const std::vector<std::vector<Index>>& sequences, Index m,
                                       const DivergenceConfig& cfg);

}  // namespace qpsynth
