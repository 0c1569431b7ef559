#include "qpsynth/fixture.hpp"

#include "qpsynth/errors.hpp"
#include "qpsynth/random.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace qpsynth {

namespace {

void check_spec(const FixtureSpec& spec) {
  if (!(spec.fs > 0) || !std::isfinite(spec.fs)) throw ParameterError("fixture fs must be positive");
  if (spec.regimes.empty()) throw ParameterError("fixture needs at least one regime");
  if (spec.mixing.size() == 0) throw ParameterError("fixture mixing matrix is empty");
  if (!spec.mixing.allFinite()) throw ParameterError("fixture mixing matrix is not finite");
  for (const auto& r : spec.regimes) {
    if (!(r.duration > 0)) throw ParameterError("regime duration must be positive");
    if (!(r.period > 0)) throw ParameterError("regime period must be positive");
    if (r.noise_std < 0 || r.noise_corr < 0) throw ParameterError("regime noise parameters must be nonnegative");
  }
}

}  // namespace

Fixture make_fixture(const FixtureSpec& spec, std::uint64_t seed) {
  check_spec(spec);
  const Index d = spec.latent_dim();

  std::vector<Index> lengths;
  Index total = 0;
  for (const auto& r : spec.regimes) {
    const auto n = static_cast<Index>(std::llround(r.duration * spec.fs));
    if (n < 1) throw ParameterError("regime shorter than one sample");
    lengths.push_back(n);
    total += n;
  }

  Rng rng = make_rng(seed, {stage::kFixture});
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);

  Eigen::MatrixXd latent(total, d);
  Index row = 0;
  for (std::size_t k = 0; k < spec.regimes.size(); ++k) {
    const RegimeSpec& r = spec.regimes[k];
    const Index n = lengths[k];
    // AR(1) discretization of an OU process; a = 0 degenerates to white noise.
    const double a = r.noise_corr > 0 ? std::exp(-1.0 / (spec.fs * r.noise_corr)) : 0.0;
    const double innov = std::sqrt(1.0 - a * a);
    for (Index j = 0; j < d; ++j) {
      const double phase = phase_dist(rng);
      double noise = gauss(rng);
      for (Index i = 0; i < n; ++i) {
        if (i > 0) noise = a * noise + innov * gauss(rng);
        const double t = static_cast<double>(i) / spec.fs;
        latent(row + i, j) = r.amplitude * std::sin(2.0 * std::numbers::pi * t / r.period + phase) +
                             r.noise_std * noise;
      }
    }
    row += n;
  }

  Fixture out;
  out.spec = spec;
  out.recording.fs = spec.fs;
  out.recording.data = latent * spec.mixing.transpose();
  out.recording.channel_labels = default_channel_labels(spec.channels());
  Index at = 0;
  for (std::size_t k = 0; k + 1 < lengths.size(); ++k) {
    at += lengths[k];
    out.changepoints.push_back(at);
  }
  return out;
}

Eigen::MatrixXd random_mixing(Index channels, Index latent_dim, std::uint64_t seed) {
  if (channels < 1 || latent_dim < 1) throw ParameterError("mixing dimensions must be positive");
  Rng rng = make_rng(seed, {stage::kFixture, 1});
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd m(channels, latent_dim);
  for (Index c = 0; c < channels; ++c)
    for (Index j = 0; j < latent_dim; ++j) m(c, j) = gauss(rng);
  return m;
}

FixtureSpec parse_fixture_spec(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("fixture spec is not valid JSON: ") + e.what());
  }
  FixtureSpec spec;
  try {
    spec.fs = j.value("fs", 256.0);
    for (const auto& r : j.at("regimes")) {
      RegimeSpec reg;
      reg.duration = r.value("duration", reg.duration);
      reg.period = r.value("period", reg.period);
      reg.amplitude = r.value("amplitude", reg.amplitude);
      reg.noise_std = r.value("noise_std", reg.noise_std);
      reg.noise_corr = r.value("noise_corr", reg.noise_corr);
      spec.regimes.push_back(reg);
    }
    if (j.contains("mixing")) {
      const auto& rows = j.at("mixing");
      const auto c = static_cast<Index>(rows.size());
      const auto d = c > 0 ? static_cast<Index>(rows.at(0).size()) : 0;
      spec.mixing.resize(c, d);
      for (Index i = 0; i < c; ++i) {
        if (static_cast<Index>(rows.at(i).size()) != d) throw FormatError("mixing rows differ in length");
        for (Index k = 0; k < d; ++k) spec.mixing(i, k) = rows.at(i).at(k).get<double>();
      }
    } else {
      const auto c = j.at("channels").get<Index>();
      const auto d = j.value("latent_dim", Index{3});
      spec.mixing = random_mixing(c, d, j.value("mixing_seed", std::uint64_t{0}));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("fixture spec: ") + e.what());
  }
  check_spec(spec);
  return spec;
}

FixtureSpec load_fixture_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open fixture spec " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_fixture_spec(ss.str());
}

}  // namespace qpsynth
