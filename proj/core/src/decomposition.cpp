#include "qpsynth/decomposition.hpp"

#include "qpsynth/errors.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>

namespace qpsynth {
namespace {

constexpr double kRelativeRankTol = 1e-12;

void check_invertible(const Eigen::VectorXd& sigma) {
  if (sigma.size() == 0 || !(sigma(0) > 0)) throw RankDeficiencyError("decomposition has no energy");
  for (Index r = 0; r < sigma.size(); ++r) {
    if (sigma(r) < kRelativeRankTol * sigma(0)) {
      throw RankDeficiencyError("singular value " + std::to_string(r + 1) +
                                " is below 1e-12 * sigma_1");
    }
  }
}

}  // namespace

Eigen::MatrixXd DecompositionModel::right_vectors() const {
  check_invertible(singular_values);
  return loadings * singular_values.cwiseInverse().asDiagonal();
}

StackedData stack_and_center(const std::vector<Recording>& recordings) {
  if (recordings.empty()) throw ParameterError("no recordings to stack");
  const Index channels = recordings.front().channels();
  StackedData out;
  Index rows = 0;
  for (const auto& rec : recordings) {
    if (rec.channels() != channels) throw ShapeError("recordings have different channel counts");
    if (rec.fs != recordings.front().fs) throw ShapeError("recordings have different sampling rates");
    rows += rec.samples();
    out.sample_boundaries.push_back(rows);
  }
  out.centered.resize(rows, channels);
  Index at = 0;
  for (const auto& rec : recordings) {
    out.centered.middleRows(at, rec.samples()) = rec.data;
    at += rec.samples();
  }
  out.column_means = out.centered.colwise().mean().transpose();
  out.centered.rowwise() -= out.column_means.transpose();
  return out;
}

SvdFit fit_svd(const StackedData& stacked, Index d) {
  SvdFit fit = fit_svd(stacked.centered, d);
  fit.model.column_means = stacked.column_means;
  fit.scores.sample_boundaries = stacked.sample_boundaries;
  return fit;
}

SvdFit fit_svd(const Eigen::MatrixXd& x, Index d) {
  const Index rows = x.rows();
  const Index cols = x.cols();
  if (d < 1 || d > std::min(rows, cols)) {
    throw ParameterError("rank must satisfy 1 <= d <= min(T, C); got d=" + std::to_string(d));
  }

  const Eigen::MatrixXd gram = x.transpose() * x;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success) throw NumericalError("Gram eigendecomposition failed");

  // Eigenvalues ascend; the leading d components are the last d columns.
  Eigen::MatrixXd v(cols, d);
  Eigen::VectorXd sigma(d);
  for (Index r = 0; r < d; ++r) {
    const Index src = cols - 1 - r;
    auto col = eig.eigenvectors().col(src);
    Index arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    v.col(r) = col(arg) < 0 ? Eigen::VectorXd(-col) : Eigen::VectorXd(col);
    // |x v| instead of sqrt(eigenvalue): the square root turns Gram round-off
    // of eps * sigma_1^2 into a spurious sigma of 1e-8 * sigma_1.
    sigma(r) = (x * v.col(r)).norm();
    if (r > 0) sigma(r) = std::min(sigma(r), sigma(r - 1));
  }

  SvdFit fit;
  fit.model.singular_values = sigma;
  fit.model.loadings = v * sigma.asDiagonal();
  fit.model.column_means = Eigen::VectorXd::Zero(cols);
  fit.scores.scores.resize(rows, d);
  for (Index r = 0; r < d; ++r) {
    if (sigma(r) > kRelativeRankTol * std::max(sigma(0), 1e-300)) {
      fit.scores.scores.col(r) = x * v.col(r) / sigma(r);
    } else {
      fit.scores.scores.col(r).setZero();
    }
  }
  fit.scores.sample_boundaries = {rows};
  return fit;
}

Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& scores, const DecompositionModel& model,
                            bool add_means) {
  if (scores.cols() != model.rank()) {
    throw ShapeError("score columns (" + std::to_string(scores.cols()) + ") != model rank (" +
                     std::to_string(model.rank()) + ")");
  }
  Eigen::MatrixXd out = scores * model.loadings.transpose();
  if (add_means) out.rowwise() += model.column_means.transpose();
  return out;
}

Eigen::MatrixXd project(const Eigen::MatrixXd& data, const DecompositionModel& model) {
  if (data.cols() != model.channels()) {
    throw ShapeError("data has " + std::to_string(data.cols()) + " channels, model expects " +
                     std::to_string(model.channels()));
  }
  check_invertible(model.singular_values);
  const Eigen::MatrixXd centered = data.rowwise() - model.column_means.transpose();
  const Eigen::VectorXd inv_sq = model.singular_values.array().square().inverse();
  return centered * model.loadings * inv_sq.asDiagonal();
}

}  // namespace qpsynth
