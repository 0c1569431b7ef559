#pragma once

#include <Eigen/Dense>

#include <vector>

namespace qpsynth {

/// Half-open frequency band [lo, hi) in Hz.
struct Band {
  double lo = 0.0;
  double hi = 0.0;
};

/// Theta 4-8, alpha 8-12, beta 13-30 Hz.
std::vector<Band> default_bands();

/// One-sided Welch power spectral density: Hann window, segments of
/// min(nperseg, n) samples with 50% overlap, per-segment mean removed.
struct Spectrum {
  Eigen::VectorXd freqs;
  Eigen::VectorXd power;
};
Spectrum welch(const Eigen::Ref<const Eigen::VectorXd>& x, double fs, Eigen::Index nperseg = 256);

/// Power in each band divided by total power above DC.
Eigen::VectorXd relative_band_power(const Eigen::Ref<const Eigen::VectorXd>& x, double fs,
                                    const std::vector<Band>& bands);

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
double ks_statistic(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b);

}  // namespace qpsynth
