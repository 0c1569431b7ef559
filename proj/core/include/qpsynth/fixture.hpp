#pragma once

#include "qpsynth/ingest.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace qpsynth {

/// One regime of a synthetic latent process: a sinusoid of the given period
/// plus colored noise. noise_corr is the OU correlation time in seconds
/// (0 gives white noise).
struct RegimeSpec {
  double duration = 10.0;  // s
  double period = 1.0;     // s
  double amplitude = 1.0;
  double noise_std = 0.1;
  double noise_corr = 0.0;  // s
};

/// Ground-truth generator description. `mixing` is C x d and maps d latent
/// processes to C channels.
struct FixtureSpec {
  double fs = 256.0;
  Eigen::MatrixXd mixing;
  std::vector<RegimeSpec> regimes;

  Index channels() const noexcept { return mixing.rows(); }
  Index latent_dim() const noexcept { return mixing.cols(); }
};

struct Fixture {
  Recording recording;
  /// Interior regime boundaries in samples.
  std::vector<Index> changepoints;
  FixtureSpec spec;
};

Fixture make_fixture(const FixtureSpec& spec, std::uint64_t seed);

/// Gaussian C x d mixing matrix, deterministic in seed.
Eigen::MatrixXd random_mixing(Index channels, Index latent_dim, std::uint64_t seed);

/// JSON spec: {"fs", "regimes": [{duration, period, amplitude, noise_std,
/// noise_corr}], and either "mixing": [[...]] or "channels" + "latent_dim"
/// (+ optional "mixing_seed")}.
FixtureSpec parse_fixture_spec(const std::string& json_text);
FixtureSpec load_fixture_spec(const std::filesystem::path& path);

}  // namespace qpsynth
