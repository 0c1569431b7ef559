#pragma once

#include "qpsynth/changepoint.hpp"
#include "qpsynth/decomposition.hpp"
#include "qpsynth/gp.hpp"
#include "qpsynth/ingest.hpp"
#include "qpsynth/kernel_states.hpp"
#include "qpsynth/pointprocess.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace qpsynth {

inline constexpr int kModelFormatVersion = 1;

struct PipelineConfig {
  Index rank = 3;
  StationarityConfig changepoints;
  FitConfig fit;
  /// Number of kernel states; clamped to the segment count.
  Index states = 50;
  DivergenceConfig divergence;
  double bandwidth = 0.5;  // s
  /// Cholesky jitter for generation draws, relative to sigma_f2.
  double jitter = 1e-3;
  /// Changepoints leaving a segment shorter than this are dropped.
  Index min_segment = 16;
  /// z-score each recording before stacking.
  bool normalize = true;
  std::uint64_t seed = 0;

  /// Throws ParameterError on any invalid component.
  void validate() const;
};

struct PatientModel {
  int format_version = kModelFormatVersion;
  double fs = 0.0;
  std::vector<std::string> channel_labels;
  DecompositionModel decomposition;
  /// Per sample, in input order.
  std::vector<NormStats> norm_stats;
  /// Indexed by sample * rank + component.
  std::vector<ChangepointSet> changepoints;
  std::vector<IntensityModel> intensities;
  /// Ordered by sample, component, then time.
  std::vector<SegmentModel> segments;
  KernelStateLibrary library;
  PipelineConfig config;

  Index rank() const noexcept { return decomposition.rank(); }
  Index sample_count() const noexcept { return static_cast<Index>(norm_stats.size()); }
  Index sample_length(Index s) const { return changepoints.at(static_cast<std::size_t>(s * rank())).length(); }
  const ChangepointSet& changepoints_for(Index s, Index r) const {
    return changepoints.at(static_cast<std::size_t>(s * rank() + r));
  }
  const IntensityModel& intensity_for(Index s, Index r) const {
    return intensities.at(static_cast<std::size_t>(s * rank() + r));
  }

  /// Throws DataError unless every structural invariant holds.
  void validate() const;
};

/// Stack, SVD, per-(sample, component) changepoints, per-segment GP fits,
/// kernel-state library and changepoint intensities. Deterministic in
/// cfg.seed. Errors keep their type and gain (s, r, k) context.
PatientModel fit_patient(const std::vector<Recording>& recordings, const PipelineConfig& cfg);

struct GenerationRequest {
  Index sample = 0;
  double duration = 0.0;  // s
  std::uint64_t seed = 0;
};

/// What generate drew for one component.
struct ComponentTrace {
  ChangepointSet changepoints;
  std::vector<Index> states;
  /// Value of segment k's draw at the first sample of segment k + 1, one
  /// entry per interior changepoint.
  std::vector<double> left_endpoints;
};

struct GenerationTrace {
  Eigen::MatrixXd scores;  // T' x d, before reconstruction
  std::vector<ComponentTrace> components;
};

/// floor(duration * fs) x C recording in the template sample's units. Each
/// component draws changepoints from its intensity, one state per segment,
/// and a GP path per segment conditioned on the previous segment's value at
/// the shared boundary sample. Deterministic in req.seed.
Recording generate(const PatientModel& model, const GenerationRequest& req, GenerationTrace* trace = nullptr);

/// One surrogate per input recording, drawn with the empirical changepoints
/// and the per-segment fitted parameters. Throws ParameterError when the
/// recordings do not match the model.
std::vector<std::pair<Recording, Recording>> surrogate_pairs(const PatientModel& model,
                                                             const std::vector<Recording>& recordings,
                                                             std::uint64_t seed);

struct EegifyResult {
  std::filesystem::path manifest;
  std::vector<std::filesystem::path> segments;
  /// -1 when no weights were found and nothing was run.
  int exit_code = -1;
  bool ran = false;
};

/// Writes `rec` as 1024-sample binary segments under dir/segs with a
/// manifest.json. When dir/weights exists, runs
/// `<program> apply --weights dir/weights --in dir/segs --out dir/segs_out`.
EegifyResult eegify_export(const Recording& rec, const std::filesystem::path& dir,
                           const std::string& program = "eegify", Index segment_length = 1024);

}  // namespace qpsynth
