#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace qpsynth {

using Index = Eigen::Index;

/// A T x C multichannel signal. Rows are time samples, columns are channels.
struct Recording {
  Eigen::MatrixXd data;
  double fs = 0.0;
  std::vector<std::string> channel_labels;

  Index samples() const noexcept { return data.rows(); }
  Index channels() const noexcept { return data.cols(); }
  double duration() const noexcept { return fs > 0 ? static_cast<double>(samples()) / fs : 0.0; }

  /// Throws DataError unless T >= 1, C >= 1, fs > 0, all values finite and
  /// the label count equals C.
  void validate() const;
};

/// Labels "ch1".."chC".
std::vector<std::string> default_channel_labels(Index channels);

enum class NormScope { per_segment_global };

/// One mean and one standard deviation over every channel and time point.
struct NormStats {
  double mean = 0.0;
  double std = 1.0;
  NormScope scope = NormScope::per_segment_global;
};

enum class FileFormat { csv, raw_binary };

/// ".csv" maps to csv; anything else to the raw binary layout.
FileFormat format_from_path(const std::filesystem::path& path);

/// CSV: "# fs=<float>", a label line, then one comma-separated row per sample.
/// Binary: "GPEG", u32 version=1, u32 T, u32 C, f64 fs, then T*C f32 values
/// row-major, all little-endian. Binary files carry no labels.
Recording load_recording(const std::filesystem::path& path, FileFormat format);
Recording load_recording(const std::filesystem::path& path);

/// Binary output stores amplitudes as f32; CSV output keeps full precision.
void save_recording(const Recording& rec, const std::filesystem::path& path, FileFormat format);
void save_recording(const Recording& rec, const std::filesystem::path& path);

/// Zero-phase second-order notch at f0 (Hz) with quality factor q, applied
/// forward then backward per channel.
Recording notch_filter(const Recording& rec, double f0, double q = 30.0);

/// Windows of `length` rows starting at 0, stride, 2*stride, ...; a trailing
/// partial window is dropped.
std::vector<Recording> segment(const Recording& rec, Index length, Index stride);

/// Global z-score over all channels and samples (population std).
std::pair<Recording, NormStats> zscore_normalize(const Recording& rec);

Recording denormalize(const Recording& rec, const NormStats& stats);

/// Row-wise concatenation; channel counts and rates must agree.
Recording concatenate(const std::vector<Recording>& parts);

}  // namespace qpsynth
