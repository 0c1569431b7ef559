#pragma once

#include "qpsynth/ingest.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <vector>

namespace qpsynth {

/// A set of S equally shaped T x C samples.
using SampleSet = std::vector<Eigen::MatrixXd>;

/// Marginal distribution difference. For every (t, c) both S-vectors are
/// binned on `bins` shared equal-width bins spanning the pooled range; the
/// absolute count differences are summed and divided by S, then averaged
/// over cells. Range [0, 2]. Throws ShapeError on mismatched sets.
double mdd(const SampleSet& real, const SampleSet& synth, int bins = 50);

/// Per-channel autocorrelation at lags 1..max_lag, from biased per-sample
/// estimates averaged over each set; sqrt of the summed squared differences.
/// Throws DegenerateSignalError for a constant channel in any sample.
double acd(const SampleSet& real, const SampleSet& synth, int max_lag = 63);

enum class MomentPooling { pooled, per_sample };

/// |standardized moment of order p (real) - same (synth)|, p in {3, 4}.
/// Pooled over every value of a set, or averaged over per-sample moments.
double moment_diff(const SampleSet& real, const SampleSet& synth, int order,
                   MomentPooling pooling = MomentPooling::pooled);

struct MetricsConfig {
  int bins = 50;
  int max_lag = 63;
  MomentPooling pooling = MomentPooling::pooled;
};

struct MetricsReport {
  double mdd = 0.0;
  double acd = 0.0;
  double sd = 0.0;
  double kd = 0.0;
  int bins = 50;
  int max_lag = 63;
  Index n_samples = 0;
  Index n_times = 0;
  Index n_channels = 0;

  /// {mdd, acd, sd, kd, bins, max_lag, n_samples, shapes} in that order.
  std::string to_json() const;
};

MetricsReport evaluate_sets(const SampleSet& real, const SampleSet& synth, const MetricsConfig& cfg = {});

/// Loads every recording file (json files skipped) from both directories,
/// pairs them by sorted filename and evaluates. Throws DataError naming the
/// offending files on count or shape mismatch.
MetricsReport evaluate(const std::filesystem::path& real_dir, const std::filesystem::path& synth_dir,
                       const MetricsConfig& cfg = {});

/// Recording files of a directory in sorted filename order.
std::vector<std::filesystem::path> recording_files(const std::filesystem::path& dir);

}  // namespace qpsynth
