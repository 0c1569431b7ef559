#pragma once

#include "qpsynth/random.hpp"

#include <vector>

namespace qpsynth {

/// Gaussian KDE over changepoint times, scaled by the event count so that it
/// integrates to N over [0, horizon). Times in seconds.
struct IntensityModel {
  std::vector<double> event_times;  // sorted, in [0, horizon)
  double bandwidth = 0.5;
  double horizon = 0.0;

  std::size_t total_events() const noexcept { return event_times.size(); }
  /// Throws DataError unless the invariants hold.
  void validate() const;
};

/// Throws ParameterError for horizon <= 0, bandwidth <= 0 or an event outside
/// [0, horizon).
IntensityModel fit_intensity(std::vector<double> event_times, double horizon, double bandwidth = 0.5);

/// lambda(t) = sum_i phi_h(t - t_i) with each kernel reflected at 0 and at
/// the horizon. Beyond the horizon t is taken modulo the horizon. Kernels are
/// truncated at 8 bandwidths. Throws ParameterError for t < 0.
double intensity_at(const IntensityModel& model, double t);

/// Lambda(t) = integral of intensity_at over [0, t], in closed form.
double integrated_intensity(const IntensityModel& model, double t);

/// Lewis thinning on [0, duration) against the maximum of a scan of
/// [0, horizon) at scan_step seconds. Sorted output; empty when lambda is 0.
std::vector<double> sample_events(const IntensityModel& model, double duration, Rng& rng, double scan_step = 1e-3);

}  // namespace qpsynth
