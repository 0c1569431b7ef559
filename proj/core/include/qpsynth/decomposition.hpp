#pragma once

#include "qpsynth/ingest.hpp"

#include <Eigen/Dense>

#include <vector>

namespace qpsynth {

/// Spatial side of a rank-d truncated SVD of the stacked, column-centred
/// recordings: x - means ~= U * loadings^T with loadings = V * diag(sigma).
struct DecompositionModel {
  Eigen::MatrixXd loadings;         // C x d
  Eigen::VectorXd column_means;     // C
  Eigen::VectorXd singular_values;  // d, nonincreasing

  Index rank() const noexcept { return loadings.cols(); }
  Index channels() const noexcept { return loadings.rows(); }

  /// V = loadings * diag(1/sigma); requires every singular value above
  /// 1e-12 * sigma_1.
  Eigen::MatrixXd right_vectors() const;
};

/// Temporal side: orthonormal score columns over the stacked rows.
struct TemporalScores {
  Eigen::MatrixXd scores;  // T x d
  /// Row offsets closing each stacked sample; strictly increasing, last == T.
  std::vector<Index> sample_boundaries;

  Index sample_count() const noexcept { return static_cast<Index>(sample_boundaries.size()); }
  Index sample_begin(Index s) const { return s == 0 ? 0 : sample_boundaries[static_cast<std::size_t>(s - 1)]; }
  Index sample_length(Index s) const { return sample_boundaries[static_cast<std::size_t>(s)] - sample_begin(s); }
  /// Rows of U belonging to sample s.
  Eigen::MatrixXd sample(Index s) const { return scores.middleRows(sample_begin(s), sample_length(s)); }
};

struct StackedData {
  Eigen::MatrixXd centered;  // sum T_s x C
  Eigen::VectorXd column_means;
  std::vector<Index> sample_boundaries;
};

/// Concatenates along time and removes the pooled column means.
/// Throws ShapeError on mismatched channel counts or sampling rates.
StackedData stack_and_center(const std::vector<Recording>& recordings);

struct SvdFit {
  DecompositionModel model;
  TemporalScores scores;
};

/// Rank-d truncated SVD through the eigendecomposition of the C x C Gram
/// matrix, with singular values taken as |x v_r|. Each right singular vector
/// is signed so its largest-magnitude entry is positive. Throws
/// ParameterError unless 1 <= d <= min(T, C).
SvdFit fit_svd(const StackedData& stacked, Index d);
SvdFit fit_svd(const Eigen::MatrixXd& centered, Index d);

/// scores * loadings^T, plus the column means when add_means is set.
Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& scores, const DecompositionModel& model,
                            bool add_means);

/// (data - means) * V * diag(1/sigma). Throws RankDeficiencyError when a
/// singular value is below 1e-12 * sigma_1.
Eigen::MatrixXd project(const Eigen::MatrixXd& data, const DecompositionModel& model);

}  // namespace qpsynth
