#include "qpsynth/spectral.hpp"

#include "qpsynth/errors.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

namespace qpsynth {

std::vector<Band> default_bands() { return {{4.0, 8.0}, {8.0, 12.0}, {13.0, 30.0}}; }

Spectrum welch(const Eigen::Ref<const Eigen::VectorXd>& x, double fs, Eigen::Index nperseg) {
  const Eigen::Index n = x.size();
  if (n < 2) throw ParameterError("welch needs at least 2 samples");
  if (!(fs > 0)) throw ParameterError("welch needs a positive sampling rate");
  const Eigen::Index seg = std::min(nperseg, n);
  const Eigen::Index hop = seg - seg / 2;
  const Eigen::Index nfreq = seg / 2 + 1;

  // Periodic Hann window.
  Eigen::VectorXd win(seg);
  for (Eigen::Index i = 0; i < seg; ++i)
    win(i) = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(seg));
  const double scale = 1.0 / (fs * win.squaredNorm());

  Eigen::FFT<double> fft;
  std::vector<double> buf(static_cast<std::size_t>(seg));
  std::vector<std::complex<double>> spec;
  Spectrum out;
  out.power = Eigen::VectorXd::Zero(nfreq);
  Eigen::Index count = 0;
  for (Eigen::Index a = 0; a + seg <= n; a += hop) {
    const double mean = x.segment(a, seg).mean();
    for (Eigen::Index i = 0; i < seg; ++i) buf[static_cast<std::size_t>(i)] = (x(a + i) - mean) * win(i);
    fft.fwd(spec, buf);
    for (Eigen::Index k = 0; k < nfreq; ++k) {
      double p = std::norm(spec[static_cast<std::size_t>(k)]) * scale;
      if (k > 0 && !(seg % 2 == 0 && k == nfreq - 1)) p *= 2.0;
      out.power(k) += p;
    }
    ++count;
  }
  out.power /= static_cast<double>(count);
  out.freqs.resize(nfreq);
  for (Eigen::Index k = 0; k < nfreq; ++k) out.freqs(k) = static_cast<double>(k) * fs / static_cast<double>(seg);
  return out;
}

Eigen::VectorXd relative_band_power(const Eigen::Ref<const Eigen::VectorXd>& x, double fs,
                                    const std::vector<Band>& bands) {
  const Spectrum s = welch(x, fs);
  const double total = s.power.tail(s.power.size() - 1).sum();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(bands.size()));
  if (!(total > 0)) return out;
  for (std::size_t b = 0; b < bands.size(); ++b) {
    double acc = 0;
    for (Eigen::Index k = 0; k < s.freqs.size(); ++k)
      if (s.freqs(k) >= bands[b].lo && s.freqs(k) < bands[b].hi) acc += s.power(k);
    out(static_cast<Eigen::Index>(b)) = acc / total;
  }
  return out;
}

double ks_statistic(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() == 0 || b.size() == 0) throw ParameterError("KS statistic needs two nonempty samples");
  std::vector<double> x(a.data(), a.data() + a.size());
  std::vector<double> y(b.data(), b.data() + b.size());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double nx = static_cast<double>(x.size());
  const double ny = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / nx - static_cast<double>(j) / ny));
  }
  return d;
}

}  // namespace qpsynth
