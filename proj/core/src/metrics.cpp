#include "qpsynth/metrics.hpp"

#include "qpsynth/errors.hpp"

#include "parallel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>

namespace qpsynth {

namespace {

void check_sets(const SampleSet& a, const SampleSet& b) {
  if (a.empty() || b.empty()) throw ShapeError("metric sets must be nonempty");
  if (a.size() != b.size()) throw ShapeError("metric sets differ in sample count");
  const Index t = a.front().rows(), c = a.front().cols();
  if (t < 1 || c < 1) throw ShapeError("metric samples must be nonempty matrices");
  for (const SampleSet* set : {&a, &b})
    for (const auto& m : *set)
      if (m.rows() != t || m.cols() != c) throw ShapeError("metric samples differ in shape");
}

// Set-averaged biased autocorrelation of one channel at lags 1..max_lag.
Eigen::VectorXd mean_autocorr(const SampleSet& set, Index c, int max_lag) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(max_lag);
  for (const auto& m : set) {
    const Eigen::VectorXd x = m.col(c).array() - m.col(c).mean();
    const double denom = x.squaredNorm();
    if (!(denom > 0)) throw DegenerateSignalError("constant channel " + std::to_string(c) + " in autocorrelation");
    const Index t = x.size();
    for (int l = 1; l <= max_lag; ++l) acc(l - 1) += x.head(t - l).dot(x.tail(t - l)) / denom;
  }
  return acc / static_cast<double>(set.size());
}

double standardized_moment(const double* begin, const double* end, int order) {
  const double n = static_cast<double>(end - begin);
  const double mu = std::accumulate(begin, end, 0.0) / n;
  double m2 = 0.0, mp = 0.0;
  for (const double* p = begin; p != end; ++p) {
    const double d = *p - mu;
    m2 += d * d;
    mp += std::pow(d, order);
  }
  m2 /= n;
  mp /= n;
  if (!(m2 > 0)) throw DegenerateSignalError("zero variance in standardized moment");
  return mp / std::pow(m2, 0.5 * order);
}

double set_moment(const SampleSet& set, int order, MomentPooling pooling) {
  if (pooling == MomentPooling::per_sample) {
    double acc = 0.0;
    for (const auto& m : set) acc += standardized_moment(m.data(), m.data() + m.size(), order);
    return acc / static_cast<double>(set.size());
  }
  std::vector<double> all;
  for (const auto& m : set) all.insert(all.end(), m.data(), m.data() + m.size());
  return standardized_moment(all.data(), all.data() + all.size(), order);
}

}  // namespace

double mdd(const SampleSet& real, const SampleSet& synth, int bins) {
  check_sets(real, synth);
  if (bins < 2) throw ParameterError("mdd needs at least 2 bins");
  const Index s = static_cast<Index>(real.size());
  const Index t = real.front().rows(), c = real.front().cols();
  const std::size_t cells = static_cast<std::size_t>(t * c);
  std::vector<long long> diff(cells, 0);
  detail::parallel_for(cells, [&](std::size_t cell) {
    const Index row = static_cast<Index>(cell) % t, col = static_cast<Index>(cell) / t;
    double lo = real.front()(row, col), hi = lo;
    for (const SampleSet* set : {&real, &synth})
      for (const auto& m : *set) {
        lo = std::min(lo, m(row, col));
        hi = std::max(hi, m(row, col));
      }
    std::vector<long long> counts(static_cast<std::size_t>(bins), 0);
    auto bin_of = [&](double v) {
      if (!(hi > lo)) return 0;
      const int b = static_cast<int>(std::floor((v - lo) / (hi - lo) * bins));
      return std::clamp(b, 0, bins - 1);
    };
    for (const auto& m : real) ++counts[static_cast<std::size_t>(bin_of(m(row, col)))];
    for (const auto& m : synth) --counts[static_cast<std::size_t>(bin_of(m(row, col)))];
    long long total = 0;
    for (long long k : counts) total += std::llabs(k);
    diff[cell] = total;
  });
  const long long total = std::accumulate(diff.begin(), diff.end(), 0LL);
  return static_cast<double>(total) / (static_cast<double>(s) * static_cast<double>(cells));
}

double acd(const SampleSet& real, const SampleSet& synth, int max_lag) {
  check_sets(real, synth);
  if (max_lag < 1) throw ParameterError("acd needs max_lag >= 1");
  if (real.front().rows() <= max_lag) throw ParameterError("acd needs more samples per series than max_lag");
  const Index c = real.front().cols();
  double acc = 0.0;
  for (Index ch = 0; ch < c; ++ch) acc += (mean_autocorr(real, ch, max_lag) - mean_autocorr(synth, ch, max_lag)).squaredNorm();
  return std::sqrt(acc);
}

double moment_diff(const SampleSet& real, const SampleSet& synth, int order, MomentPooling pooling) {
  check_sets(real, synth);
  if (order != 3 && order != 4) throw ParameterError("moment order must be 3 or 4");
  return std::abs(set_moment(real, order, pooling) - set_moment(synth, order, pooling));
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["mdd"] = mdd;
  j["acd"] = acd;
  j["sd"] = sd;
  j["kd"] = kd;
  j["bins"] = bins;
  j["max_lag"] = max_lag;
  j["n_samples"] = n_samples;
  j["shapes"] = {{"times", n_times}, {"channels", n_channels}};
  return j.dump(2) + "\n";
}

MetricsReport evaluate_sets(const SampleSet& real, const SampleSet& synth, const MetricsConfig& cfg) {
  check_sets(real, synth);
  MetricsReport r;
  r.mdd = mdd(real, synth, cfg.bins);
  r.acd = acd(real, synth, cfg.max_lag);
  r.sd = moment_diff(real, synth, 3, cfg.pooling);
  r.kd = moment_diff(real, synth, 4, cfg.pooling);
  r.bins = cfg.bins;
  r.max_lag = cfg.max_lag;
  r.n_samples = static_cast<Index>(real.size());
  r.n_times = real.front().rows();
  r.n_channels = real.front().cols();
  return r;
}

std::vector<std::filesystem::path> recording_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto name = e.path().filename().string();
    if (name.empty() || name.front() == '.' || e.path().extension() == ".json") continue;
    out.push_back(e.path());
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.filename() < b.filename(); });
  return out;
}

MetricsReport evaluate(const std::filesystem::path& real_dir, const std::filesystem::path& synth_dir,
                       const MetricsConfig& cfg) {
  const auto rf = recording_files(real_dir);
  const auto sf = recording_files(synth_dir);
  if (rf.size() != sf.size())
    throw DataError("file count mismatch: " + std::to_string(rf.size()) + " in " + real_dir.string() + ", " +
                    std::to_string(sf.size()) + " in " + synth_dir.string());
  if (rf.empty()) throw DataError("no recordings in " + real_dir.string());
  SampleSet real, synth;
  for (std::size_t i = 0; i < rf.size(); ++i) {
    real.push_back(load_recording(rf[i]).data);
    synth.push_back(load_recording(sf[i]).data);
    if (real.back().rows() != real.front().rows() || real.back().cols() != real.front().cols() ||
        synth.back().rows() != real.front().rows() || synth.back().cols() != real.front().cols())
      throw DataError("shape mismatch: " + rf[i].string() + " vs " + sf[i].string() + " (expected " +
                      std::to_string(real.front().rows()) + "x" + std::to_string(real.front().cols()) + ")");
  }
  return evaluate_sets(real, synth, cfg);
}

}  // namespace qpsynth
