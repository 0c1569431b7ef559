#include "qpsynth/gp.hpp"

#include "qpsynth/errors.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace qpsynth {

namespace {

constexpr double kSqrt3 = 1.7320508075688772;
constexpr double kMaxJitter = 1e-1;

struct Factored {
  Eigen::MatrixXd k;  // with the jitter that succeeded
  Eigen::MatrixXd l;
  double jitter = 0.0;
};

Eigen::MatrixXd raw_kernel(const KernelHyperparams& p, const Eigen::Ref<const Eigen::VectorXd>& grid) {
  const Index n = grid.size();
  Eigen::MatrixXd k(n, n);
  for (Index j = 0; j < n; ++j) {
    k(j, j) = p.sigma_f2;
    for (Index i = j + 1; i < n; ++i) {
      const double v = kernel_at_lag(p, grid(i) - grid(j));
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

Factored factor_with_escalation(const KernelHyperparams& p, const Eigen::Ref<const Eigen::VectorXd>& grid,
                                double jitter) {
  p.validate();
  if (grid.size() < 1) throw ParameterError("covariance grid is empty");
  if (!grid.allFinite()) throw ParameterError("covariance grid is not finite");
  if (!(jitter >= 0)) throw ParameterError("jitter must be nonnegative");
  const Eigen::MatrixXd base = raw_kernel(p, grid);
  double j = jitter;
  while (true) {
    Factored f;
    f.k = base;
    f.k.diagonal().array() += j * p.sigma_f2;
    Eigen::LLT<Eigen::MatrixXd> llt(f.k);
    if (llt.info() == Eigen::Success) {
      f.l = llt.matrixL();
      f.jitter = j;
      return f;
    }
    if (j >= kMaxJitter) break;
    j = j > 0 ? std::min(j * 10.0, kMaxJitter) : 1e-8;
  }
  throw NumericalError("covariance Cholesky failed with jitter up to 1e-1 (G=" + std::to_string(grid.size()) + ")");
}

}  // namespace

bool KernelHyperparams::valid() const noexcept {
  auto pos = [](double v) { return std::isfinite(v) && v > 0; };
  return pos(sigma_f2) && pos(ell_p) && pos(period) && pos(ell_m) && std::isfinite(noise_var) && noise_var >= 0;
}

void KernelHyperparams::validate() const {
  if (!valid()) {
    throw ParameterError("invalid kernel hyperparameters: sigma_f2=" + std::to_string(sigma_f2) +
                         " ell_p=" + std::to_string(ell_p) + " period=" + std::to_string(period) +
                         " ell_m=" + std::to_string(ell_m) + " noise_var=" + std::to_string(noise_var));
  }
}

Eigen::Vector4d KernelHyperparams::log_params() const {
  return {std::log(sigma_f2), std::log(ell_p), std::log(period), std::log(ell_m)};
}

KernelHyperparams KernelHyperparams::from_log(const Eigen::Vector4d& theta, double noise_var) {
  KernelHyperparams p;
  p.sigma_f2 = std::exp(theta(0));
  p.ell_p = std::exp(theta(1));
  p.period = std::exp(theta(2));
  p.ell_m = std::exp(theta(3));
  p.noise_var = noise_var;
  return p;
}

double kernel_at_lag(const KernelHyperparams& p, double tau) {
  tau = std::abs(tau);
  const double s = std::sin(std::numbers::pi * tau / p.period);
  const double u = kSqrt3 * tau / p.ell_m;
  return p.sigma_f2 * std::exp(-2.0 * s * s / (p.ell_p * p.ell_p)) * (1.0 + u) * std::exp(-u);
}

double kernel_eval(const KernelHyperparams& params, double t, double t2) { return kernel_at_lag(params, t - t2); }

Eigen::MatrixXd covariance_matrix(const KernelHyperparams& params, const Eigen::Ref<const Eigen::VectorXd>& grid,
                                  double jitter) {
  return factor_with_escalation(params, grid, jitter).k;
}

Eigen::MatrixXd covariance_factor(const KernelHyperparams& params, const Eigen::Ref<const Eigen::VectorXd>& grid,
                                  double jitter) {
  return factor_with_escalation(params, grid, jitter).l;
}

double log_marginal_likelihood(const KernelHyperparams& params, const Eigen::Ref<const Eigen::VectorXd>& times,
                               const Eigen::Ref<const Eigen::VectorXd>& values) {
  params.validate();
  const Index n = times.size();
  if (n < 2) throw ParameterError("marginal likelihood needs at least 2 points");
  if (values.size() != n) throw ShapeError("times and values differ in length");
  Eigen::MatrixXd a = raw_kernel(params, times);
  a.diagonal().array() += params.noise_var;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw NumericalError("marginal likelihood: K + noise I is not positive definite");
  const Eigen::VectorXd z = llt.matrixL().solve(values);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * z.squaredNorm() - 0.5 * logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

LmlResult log_marginal_likelihood_with_gradient(const KernelHyperparams& p,
                                                const Eigen::Ref<const Eigen::VectorXd>& times,
                                                const Eigen::Ref<const Eigen::VectorXd>& values) {
  p.validate();
  const Index n = times.size();
  if (n < 2) throw ParameterError("marginal likelihood needs at least 2 points");
  if (values.size() != n) throw ShapeError("times and values differ in length");

  // Kernel and the per-entry derivative factors over the lower triangle.
  const double inv_lp2 = 1.0 / (p.ell_p * p.ell_p);
  const double w = std::numbers::pi / p.period;
  const double c3 = kSqrt3 / p.ell_m;
  Eigen::MatrixXd a(n, n), d1(n, n), d2(n, n), d3(n, n);
  for (Index j = 0; j < n; ++j) {
    a(j, j) = p.sigma_f2;
    for (Index i = j + 1; i < n; ++i) {
      const double tau = std::abs(times(i) - times(j));
      const double arg = w * tau;
      const double s = std::sin(arg);
      const double c = std::cos(arg);
      const double per = std::exp(-2.0 * inv_lp2 * s * s);
      const double u = c3 * tau;
      const double eu = std::exp(-u);
      const double kv = p.sigma_f2 * per * (1.0 + u) * eu;
      a(i, j) = kv;
      a(j, i) = kv;
      d1(i, j) = kv * 4.0 * inv_lp2 * s * s;
      d2(i, j) = kv * 4.0 * inv_lp2 * arg * s * c;
      d3(i, j) = p.sigma_f2 * per * u * u * eu;
    }
  }
  const Eigen::MatrixXd k = a;
  a.diagonal().array() += p.noise_var;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw NumericalError("marginal likelihood: K + noise I is not positive definite");

  const Eigen::VectorXd alpha = llt.solve(values);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  LmlResult r;
  r.value = -0.5 * values.dot(alpha) - 0.5 * logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);

  // grad_i = 1/2 sum((alpha alpha^T - K^-1) .* dK_i); dK_1..3 vanish on the diagonal.
  Eigen::MatrixXd b = -llt.solve(Eigen::MatrixXd::Identity(n, n));
  b.noalias() += alpha * alpha.transpose();
  r.gradient(0) = (b.array() * k.array()).sum();
  double g1 = 0, g2 = 0, g3 = 0;
  for (Index j = 0; j < n; ++j)
    for (Index i = j + 1; i < n; ++i) {
      g1 += b(i, j) * d1(i, j);
      g2 += b(i, j) * d2(i, j);
      g3 += b(i, j) * d3(i, j);
    }
  r.gradient(1) = 2.0 * g1;
  r.gradient(2) = 2.0 * g2;
  r.gradient(3) = 2.0 * g3;
  r.gradient *= 0.5;
  return r;
}

Eigen::VectorXd sample_path(const KernelHyperparams& params, const Eigen::Ref<const Eigen::VectorXd>& grid, Rng& rng,
                            double jitter) {
  const Factored f = factor_with_escalation(params, grid, jitter);
  std::normal_distribution<double> gauss;
  Eigen::VectorXd z(grid.size());
  for (Index i = 0; i < z.size(); ++i) z(i) = gauss(rng);
  return f.l.triangularView<Eigen::Lower>() * z;
}

Eigen::VectorXd sample_path_conditional(const KernelHyperparams& params, const Eigen::Ref<const Eigen::VectorXd>& grid,
                                        double t0, double y0, Rng& rng, double jitter) {
  if (grid.size() < 1) throw ParameterError("conditional path needs a nonempty grid");
  if (!(t0 <= grid(0))) throw ParameterError("anchor time must not exceed the first grid time");
  const bool shared = t0 == grid(0);
  Eigen::VectorXd joint(grid.size() + (shared ? 0 : 1));
  if (shared) {
    joint = grid;
  } else {
    joint(0) = t0;
    joint.tail(grid.size()) = grid;
  }
  const Factored f = factor_with_escalation(params, joint, jitter);
  std::normal_distribution<double> gauss;
  Eigen::VectorXd z(joint.size());
  for (Index i = 0; i < z.size(); ++i) z(i) = gauss(rng);
  Eigen::VectorXd prior = f.l.triangularView<Eigen::Lower>() * z;

  // Pathwise update: f + k(., t0) / k(t0, t0) * (y0 - f(t0)).
  const double resid = y0 - prior(0);
  Eigen::VectorXd post = prior + f.k.col(0) * (resid / f.k(0, 0));
  post(0) = y0;
  return shared ? post : Eigen::VectorXd(post.tail(grid.size()));
}

Eigen::VectorXd sample_times(Index n, double fs) {
  Eigen::VectorXd t(n);
  for (Index i = 0; i < n; ++i) t(i) = static_cast<double>(i) / fs;
  return t;
}

}  // namespace qpsynth
