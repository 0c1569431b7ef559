#include "qpsynth/pointprocess.hpp"

#include "qpsynth/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace qpsynth {

namespace {

constexpr double kCutoff = 8.0;  // bandwidths

double phi(double x, double h) {
  const double z = x / h;
  if (std::abs(z) > kCutoff) return 0.0;
  return std::exp(-0.5 * z * z) / (h * std::sqrt(2.0 * std::numbers::pi));
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Integral over [0, u] of the three reflected kernels of one event, u in [0, H].
double event_mass(double ti, double u, double h, double horizon) {
  const double direct = normal_cdf((u - ti) / h) - normal_cdf(-ti / h);
  const double low = normal_cdf((u + ti) / h) - normal_cdf(ti / h);
  const double high = normal_cdf((2.0 * horizon - ti) / h) - normal_cdf((2.0 * horizon - ti - u) / h);
  return direct + low + high;
}

// Sum over [0, H), no tiling.
double intensity_base(const IntensityModel& m, double t) {
  const double h = m.bandwidth;
  const double reach = kCutoff * h;
  const auto& ev = m.event_times;
  double acc = 0.0;
  auto lo = std::lower_bound(ev.begin(), ev.end(), t - reach);
  auto hi = std::upper_bound(ev.begin(), ev.end(), t + reach);
  for (auto it = lo; it != hi; ++it) acc += phi(t - *it, h);
  if (t < reach) {
    // Reflection about 0: phi(t + t_i).
    for (auto it = ev.begin(); it != ev.end() && *it <= reach - t; ++it) acc += phi(t + *it, h);
  }
  if (t > m.horizon - reach) {
    // Reflection about H: phi(2H - t - t_i).
    const double from = 2.0 * m.horizon - t - reach;
    for (auto it = std::lower_bound(ev.begin(), ev.end(), from); it != ev.end(); ++it)
      acc += phi(2.0 * m.horizon - t - *it, h);
  }
  return acc;
}

double wrap(const IntensityModel& m, double t) {
  if (t < m.horizon) return t;
  const double r = std::fmod(t, m.horizon);
  return r < 0 ? 0.0 : r;
}

}  // namespace

void IntensityModel::validate() const {
  if (!(horizon > 0) || !std::isfinite(horizon)) throw DataError("intensity horizon must be positive");
  if (!(bandwidth > 0) || !std::isfinite(bandwidth)) throw DataError("intensity bandwidth must be positive");
  if (!std::is_sorted(event_times.begin(), event_times.end())) throw DataError("event times are not sorted");
  for (double t : event_times)
    if (!(t >= 0 && t < horizon)) throw DataError("event time " + std::to_string(t) + " outside [0, horizon)");
}

IntensityModel fit_intensity(std::vector<double> event_times, double horizon, double bandwidth) {
  if (!(horizon > 0) || !std::isfinite(horizon)) throw ParameterError("horizon must be positive");
  if (!(bandwidth > 0) || !std::isfinite(bandwidth)) throw ParameterError("bandwidth must be positive");
  for (double t : event_times)
    if (!(t >= 0 && t < horizon))
      throw ParameterError("event time " + std::to_string(t) + " outside [0, " + std::to_string(horizon) + ")");
  std::sort(event_times.begin(), event_times.end());
  IntensityModel m;
  m.event_times = std::move(event_times);
  m.bandwidth = bandwidth;
  m.horizon = horizon;
  return m;
}

double intensity_at(const IntensityModel& model, double t) {
  if (!(t >= 0)) throw ParameterError("intensity time must be nonnegative");
  if (model.event_times.empty()) return 0.0;
  return intensity_base(model, wrap(model, t));
}

double integrated_intensity(const IntensityModel& model, double t) {
  if (!(t >= 0)) throw ParameterError("integration bound must be nonnegative");
  if (model.event_times.empty()) return 0.0;
  auto partial = [&](double u) {
    double acc = 0.0;
    for (double ti : model.event_times) acc += event_mass(ti, u, model.bandwidth, model.horizon);
    return acc;
  };
  const double periods = std::floor(t / model.horizon);
  const double rest = t - periods * model.horizon;
  return (periods > 0 ? periods * partial(model.horizon) : 0.0) + partial(std::min(rest, model.horizon));
}

std::vector<double> sample_events(const IntensityModel& model, double duration, Rng& rng, double scan_step) {
  if (!(duration > 0)) throw ParameterError("duration must be positive");
  if (!(scan_step > 0)) throw ParameterError("scan step must be positive");
  std::vector<double> out;
  if (model.event_times.empty()) return out;

  double lmax = 0.0;
  const auto steps = static_cast<long long>(std::ceil(model.horizon / scan_step));
  for (long long k = 0; k < steps; ++k) lmax = std::max(lmax, intensity_base(model, static_cast<double>(k) * scan_step));
  if (!(lmax > 0)) return out;

  std::exponential_distribution<double> gap(lmax);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double t = 0.0;
  while (true) {
    t += gap(rng);
    if (t >= duration) break;
    if (unif(rng) * lmax < intensity_at(model, t)) out.push_back(t);
  }
  return out;
}

}  // namespace qpsynth
