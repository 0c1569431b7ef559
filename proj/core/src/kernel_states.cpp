#include "qpsynth/kernel_states.hpp"

#include "qpsynth/errors.hpp"

#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <tuple>

namespace qpsynth {

namespace {

Eigen::MatrixXd lower_factor(const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("divergence covariance is not positive definite");
  return llt.matrixL();
}

// ||L_b^-1 L_a||_F^2 = tr(S_b^-1 S_a).
double trace_term(const Eigen::MatrixXd& la, const Eigen::MatrixXd& lb) {
  const Eigen::MatrixXd x = lb.triangularView<Eigen::Lower>().solve(la);
  return x.squaredNorm();
}

double jeffreys_from_factors(const Eigen::MatrixXd& la, const Eigen::MatrixXd& lb) {
  const double g = static_cast<double>(la.rows());
  // Log-determinants cancel in the symmetrized sum.
  const double v = 0.25 * (trace_term(la, lb) + trace_term(lb, la) - 2.0 * g);
  return std::max(0.0, v);
}

// log N(x; 0, L L^T) up to the shared -G/2 log 2 pi term.
double log_density(const Eigen::MatrixXd& l, const Eigen::VectorXd& x, double half_logdet) {
  const Eigen::VectorXd z = l.triangularView<Eigen::Lower>().solve(x);
  return -0.5 * z.squaredNorm() - half_logdet;
}

double log_add(double a, double b) {
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double js_from_factors(const Eigen::MatrixXd& la, const Eigen::MatrixXd& lb, int samples, Rng& rng) {
  const Index g = la.rows();
  const double hla = la.diagonal().array().log().sum();
  const double hlb = lb.diagonal().array().log().sum();
  std::normal_distribution<double> gauss;
  Eigen::VectorXd z(g);
  double acc = 0.0;
  for (int s = 0; s < samples; ++s) {
    for (Index i = 0; i < g; ++i) z(i) = gauss(rng);
    const Eigen::VectorXd xa = la.triangularView<Eigen::Lower>() * z;
    const double pa = log_density(la, xa, hla), qa = log_density(lb, xa, hlb);
    acc += pa - (log_add(pa, qa) - std::numbers::ln2);
    for (Index i = 0; i < g; ++i) z(i) = gauss(rng);
    const Eigen::VectorXd xb = lb.triangularView<Eigen::Lower>() * z;
    const double pb = log_density(la, xb, hla), qb = log_density(lb, xb, hlb);
    acc += qb - (log_add(pb, qb) - std::numbers::ln2);
  }
  return std::max(0.0, 0.5 * acc / static_cast<double>(samples));
}

Eigen::MatrixXd divergence_factor(const KernelHyperparams& p, const Eigen::VectorXd& grid, double jitter) {
  KernelHyperparams q = p;
  q.noise_var = 0.0;
  return covariance_factor(q, grid, jitter);
}

bool params_less(const KernelHyperparams& a, const KernelHyperparams& b) {
  const auto ka = std::tie(a.sigma_f2, a.ell_p, a.period, a.ell_m);
  const auto kb = std::tie(b.sigma_f2, b.ell_p, b.period, b.ell_m);
  return ka < kb;
}

void check_dissimilarity(const Eigen::MatrixXd& d) {
  if (d.rows() != d.cols()) throw ParameterError("dissimilarity matrix must be square");
  for (Index i = 0; i < d.rows(); ++i) {
    if (d(i, i) != 0.0) throw ParameterError("dissimilarity diagonal must be zero");
    for (Index j = 0; j < i; ++j) {
      if (!std::isfinite(d(i, j)) || d(i, j) < 0) throw ParameterError("dissimilarities must be finite and nonnegative");
      if (d(i, j) != d(j, i)) throw ParameterError("dissimilarity matrix must be symmetric");
    }
  }
}

Index pick(const Eigen::Ref<const Eigen::VectorXd>& weights, double u) {
  double cum = 0.0;
  Index last = -1;
  for (Index k = 0; k < weights.size(); ++k) {
    if (weights(k) <= 0) continue;
    cum += weights(k);
    last = k;
    if (u < cum) return k;
  }
  return last;  // rounding left u just above the total
}

}  // namespace

Eigen::VectorXd DivergenceConfig::grid() const { return Eigen::VectorXd::LinSpaced(grid_size, 0.0, horizon); }

void DivergenceConfig::validate() const {
  if (grid_size < 1) throw ParameterError("divergence grid needs at least one point");
  if (!(horizon > 0)) throw ParameterError("divergence horizon must be positive");
  if (!(jitter >= 0)) throw ParameterError("divergence jitter must be nonnegative");
  if (mode == DivergenceMode::monte_carlo_js && mc_samples < 1) throw ParameterError("mc_samples must be positive");
}

double jeffreys_divergence(const Eigen::MatrixXd& cov_a, const Eigen::MatrixXd& cov_b) {
  if (cov_a.rows() != cov_a.cols() || cov_a.rows() != cov_b.rows() || cov_b.rows() != cov_b.cols())
    throw ShapeError("covariances must be square and of equal size");
  if (cov_a == cov_b) return 0.0;
  return jeffreys_from_factors(lower_factor(cov_a), lower_factor(cov_b));
}

double js_divergence_mc(const Eigen::MatrixXd& cov_a, const Eigen::MatrixXd& cov_b, int samples, Rng& rng) {
  if (cov_a.rows() != cov_b.rows()) throw ShapeError("covariances must be of equal size");
  if (samples < 1) throw ParameterError("Monte-Carlo JS needs at least one sample");
  return js_from_factors(lower_factor(cov_a), lower_factor(cov_b), samples, rng);
}

double gaussian_divergence(const KernelHyperparams& a, const KernelHyperparams& b, const DivergenceConfig& cfg) {
  cfg.validate();
  a.validate();
  b.validate();
  KernelHyperparams x = a, y = b;
  x.noise_var = y.noise_var = 0.0;
  if (x == y) return 0.0;
  if (params_less(y, x)) std::swap(x, y);
  const Eigen::VectorXd grid = cfg.grid();
  const Eigen::MatrixXd lx = divergence_factor(x, grid, cfg.jitter);
  const Eigen::MatrixXd ly = divergence_factor(y, grid, cfg.jitter);
  if (cfg.mode == DivergenceMode::jeffreys) return jeffreys_from_factors(lx, ly);
  Rng rng = make_rng(cfg.seed, {stage::kDivergence});
  return js_from_factors(lx, ly, cfg.mc_samples, rng);
}

Eigen::MatrixXd pairwise_divergences(const std::vector<KernelHyperparams>& params, const DivergenceConfig& cfg) {
  cfg.validate();
  const std::size_t j = params.size();
  if (j < 2) throw ParameterError("pairwise divergences need at least 2 parameter sets");
  for (std::size_t i = 0; i < j; ++i) params[i].validate();

  const Eigen::VectorXd grid = cfg.grid();
  std::vector<Eigen::MatrixXd> factors(j);
  detail::parallel_for(j, [&](std::size_t i) {
    try {
      factors[i] = divergence_factor(params[i], grid, cfg.jitter);
    } catch (const NumericalError& e) {
      throw NumericalError("divergence factor for parameter set " + std::to_string(i) + ": " + e.what());
    }
  });

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(j * (j - 1) / 2);
  for (std::size_t a = 0; a < j; ++a)
    for (std::size_t b = a + 1; b < j; ++b) pairs.emplace_back(a, b);

  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Index>(j), static_cast<Index>(j));
  std::vector<double> values(pairs.size());
  detail::parallel_for(pairs.size(), [&](std::size_t k) {
    const auto [a, b] = pairs[k];
    // Same canonical order as gaussian_divergence so the entries agree.
    KernelHyperparams x = params[a], y = params[b];
    x.noise_var = y.noise_var = 0.0;
    if (x == y) {
      values[k] = 0.0;
      return;
    }
    const bool swap = params_less(y, x);
    const Eigen::MatrixXd& fx = swap ? factors[b] : factors[a];
    const Eigen::MatrixXd& fy = swap ? factors[a] : factors[b];
    if (cfg.mode == DivergenceMode::jeffreys) {
      values[k] = jeffreys_from_factors(fx, fy);
    } else {
      Rng rng = make_rng(cfg.seed, {stage::kDivergence});
      values[k] = js_from_factors(fx, fy, cfg.mc_samples, rng);
    }
  });
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto a = static_cast<Index>(pairs[k].first), b = static_cast<Index>(pairs[k].second);
    out(a, b) = values[k];
    out(b, a) = values[k];
  }
  return out;
}

std::vector<Index> cluster(const Eigen::MatrixXd& dissimilarity, Index m) {
  check_dissimilarity(dissimilarity);
  const Index j = dissimilarity.rows();
  if (m < 1 || m > j) throw ParameterError("cluster count must be in [1, J], got " + std::to_string(m));

  // Active clusters stay ordered by their smallest member.
  std::vector<std::vector<Index>> members(static_cast<std::size_t>(j));
  for (Index i = 0; i < j; ++i) members[static_cast<std::size_t>(i)] = {i};
  std::vector<Index> active(static_cast<std::size_t>(j));
  for (Index i = 0; i < j; ++i) active[static_cast<std::size_t>(i)] = i;
  Eigen::MatrixXd link = dissimilarity;

  while (static_cast<Index>(active.size()) > m) {
    std::size_t bi = 0, bj = 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t x = 0; x < active.size(); ++x)
      for (std::size_t y = x + 1; y < active.size(); ++y) {
        const double v = link(active[x], active[y]);
        if (v < best) {
          best = v;
          bi = x;
          bj = y;
        }
      }
    const Index a = active[bi], b = active[bj];
    const double na = static_cast<double>(members[static_cast<std::size_t>(a)].size());
    const double nb = static_cast<double>(members[static_cast<std::size_t>(b)].size());
    for (Index c : active) {
      if (c == a || c == b) continue;
      const double v = (na * link(a, c) + nb * link(b, c)) / (na + nb);
      link(a, c) = v;
      link(c, a) = v;
    }
    auto& ma = members[static_cast<std::size_t>(a)];
    const auto& mb = members[static_cast<std::size_t>(b)];
    ma.insert(ma.end(), mb.begin(), mb.end());
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(bj));
  }

  std::vector<Index> labels(static_cast<std::size_t>(j));
  for (std::size_t c = 0; c < active.size(); ++c)
    for (Index i : members[static_cast<std::size_t>(active[c])]) labels[static_cast<std::size_t>(i)] = static_cast<Index>(c);
  return labels;
}

Index medoid(const Eigen::MatrixXd& dissimilarity, const std::vector<Index>& labels, Index cluster_id) {
  if (static_cast<Index>(labels.size()) != dissimilarity.rows()) throw ShapeError("labels and dissimilarity disagree");
  Index best = -1;
  double best_sum = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != cluster_id) continue;
    double sum = 0.0;
    for (std::size_t k = 0; k < labels.size(); ++k)
      if (labels[k] == cluster_id) sum += dissimilarity(static_cast<Index>(i), static_cast<Index>(k));
    if (sum < best_sum) {
      best_sum = sum;
      best = static_cast<Index>(i);
    }
  }
  if (best < 0) throw ParameterError("cluster " + std::to_string(cluster_id) + " is empty");
  return best;
}

Transitions estimate_transitions(const std::vector<std::vector<Index>>& sequences, Index m) {
  if (m < 1) throw ParameterError("state count must be positive");
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd marginal = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd first = Eigen::VectorXd::Zero(m);
  bool any = false;
  for (const auto& seq : sequences) {
    if (seq.empty()) continue;
    any = true;
    for (Index s : seq)
      if (s < 0 || s >= m) throw ParameterError("state " + std::to_string(s) + " outside [0, " + std::to_string(m) + ")");
    first(seq.front()) += 1.0;
    for (std::size_t k = 0; k < seq.size(); ++k) {
      marginal(seq[k]) += 1.0;
      if (k + 1 < seq.size()) counts(seq[k], seq[k + 1]) += 1.0;
    }
  }
  if (!any) throw ParameterError("transition estimation needs at least one nonempty sequence");

  Transitions t;
  t.p = counts;
  marginal /= marginal.sum();
  for (Index i = 0; i < m; ++i) {
    const double row = counts.row(i).sum();
    if (row > 0)
      t.p.row(i) /= row;
    else
      t.p.row(i) = marginal.transpose();
  }
  t.pi0 = first / first.sum();
  return t;
}

void KernelStateLibrary::validate() const {
  const Index m = states();
  if (m < 1) throw DataError("state library is empty");
  if (transition.rows() != m || transition.cols() != m) throw DataError("transition matrix is not M x M");
  if (initial.size() != m) throw DataError("initial distribution has the wrong length");
  for (const auto& p : medoids)
    if (!p.valid()) throw DataError("state library holds invalid kernel parameters");
  if ((transition.array() < 0).any() || (initial.array() < 0).any()) throw DataError("negative probability");
  for (Index i = 0; i < m; ++i)
    if (std::abs(transition.row(i).sum() - 1.0) > 1e-9) throw DataError("transition row " + std::to_string(i) + " does not sum to 1");
  if (std::abs(initial.sum() - 1.0) > 1e-9) throw DataError("initial distribution does not sum to 1");
  for (Index l : labels)
    if (l < 0 || l >= m) throw DataError("segment label outside the state range");
}

std::vector<Index> sample_state_sequence(const KernelStateLibrary& library, Index length, Rng& rng) {
  if (length < 1) throw ParameterError("state sequence length must be positive");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Index> seq;
  seq.reserve(static_cast<std::size_t>(length));
  seq.push_back(pick(library.initial, unif(rng)));
  for (Index k = 1; k < length; ++k) seq.push_back(pick(library.transition.row(seq.back()).transpose(), unif(rng)));
  return seq;
}

KernelStateLibrary build_state_library(const std::vector<KernelHyperparams>& params,
                                       const std::vector<std::vector<Index>>& sequences, Index m,
                                       const DivergenceConfig& cfg) {
  cfg.validate();
  const Index j = static_cast<Index>(params.size());
  if (j < 1) throw ParameterError("state library needs at least one fitted segment");
  if (m < 1) throw ParameterError("state count must be positive");
  const Index states = std::min(m, j);

  KernelStateLibrary lib;
  lib.divergence_grid = cfg.grid();
  if (j == 1) {
    lib.labels = {0};
    lib.medoids = {params.front()};
  } else {
    const Eigen::MatrixXd d = pairwise_divergences(params, cfg);
    lib.labels = cluster(d, states);
    for (Index c = 0; c < states; ++c) lib.medoids.push_back(params[static_cast<std::size_t>(medoid(d, lib.labels, c))]);
  }

  std::vector<std::vector<Index>> labelled;
  labelled.reserve(sequences.size());
  for (const auto& seq : sequences) {
    std::vector<Index> s;
    s.reserve(seq.size());
    for (Index i : seq) {
      if (i < 0 || i >= j) throw ParameterError("sequence refers to segment " + std::to_string(i) + " outside the fit");
      s.push_back(lib.labels[static_cast<std::size_t>(i)]);
    }
    labelled.push_back(std::move(s));
  }
  const Transitions t = estimate_transitions(labelled, states);
  lib.transition = t.p;
  lib.initial = t.pi0;
  return lib;
}

}  // namespace qpsynth
