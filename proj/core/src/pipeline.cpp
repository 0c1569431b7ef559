#include "qpsynth/pipeline.hpp"

#include "qpsynth/errors.hpp"

#include "parallel.hpp"

#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

namespace qpsynth {

namespace {

// Re-throws the active library error with a context prefix, keeping its type.
template <class Fn>
decltype(auto) with_context(const std::string& ctx, Fn&& fn) {
  try {
    return fn();
  } catch (const FormatError& e) {
    throw FormatError(ctx + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(ctx + ": " + e.what());
  } catch (const ParameterError& e) {
    throw ParameterError(ctx + ": " + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(ctx + ": " + e.what());
  } catch (const DegenerateSignalError& e) {
    throw DegenerateSignalError(ctx + ": " + e.what());
  } catch (const SegmentTooShortError& e) {
    throw SegmentTooShortError(ctx + ": " + e.what());
  } catch (const RankDeficiencyError& e) {
    throw RankDeficiencyError(ctx + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(ctx + ": " + e.what());
  } catch (const FitError& e) {
    throw FitError(ctx + ": " + e.what());
  }
}

std::string where(Index s, Index r) { return "sample " + std::to_string(s) + ", component " + std::to_string(r); }
std::string where(Index s, Index r, Index k) { return where(s, r) + ", segment " + std::to_string(k); }

// Drops interior points that would leave a segment shorter than min_len.
ChangepointSet drop_short(const ChangepointSet& cps, Index min_len) {
  const Index t = cps.length();
  ChangepointSet out;
  out.boundaries.push_back(0);
  for (std::size_t i = 1; i + 1 < cps.boundaries.size(); ++i) {
    const Index b = cps.boundaries[i];
    if (b - out.boundaries.back() >= min_len && t - b >= min_len) {
      out.boundaries.push_back(b);
      out.sources.push_back(cps.sources[i - 1]);
    }
  }
  out.boundaries.push_back(t);
  return out;
}

// Draws one score column over the tiles of `cps`. Segment k + 1 shares its
// first sample with an extra last sample drawn for segment k and is
// conditioned on that value.
Eigen::VectorXd draw_column(const ChangepointSet& cps, const std::vector<KernelHyperparams>& params,
                            const std::vector<double>& means, double fs, double jitter, Rng& rng,
                            std::vector<double>* left_endpoints, const std::string& ctx) {
  const Index n = cps.length();
  const Index count = cps.segment_count();
  Eigen::VectorXd col(n);
  double anchor = 0.0;
  for (Index k = 0; k < count; ++k) {
    const Index b0 = cps.boundaries[static_cast<std::size_t>(k)];
    const Index b1 = cps.boundaries[static_cast<std::size_t>(k + 1)];
    const bool last = k + 1 == count;
    const Index len = b1 - b0 + (last ? 0 : 1);
    const Eigen::VectorXd grid = sample_times(len, fs);
    const KernelHyperparams& p = params[static_cast<std::size_t>(k)];
    const double mu = means[static_cast<std::size_t>(k)];
    const Eigen::VectorXd path = with_context(ctx + ", segment " + std::to_string(k), [&] {
      return k == 0 ? sample_path(p, grid, rng, jitter) : sample_path_conditional(p, grid, 0.0, anchor - mu, rng, jitter);
    });
    col.segment(b0, b1 - b0) = path.head(b1 - b0).array() + mu;
    if (!last) {
      anchor = path(len - 1) + mu;
      if (left_endpoints) left_endpoints->push_back(anchor);
    }
  }
  return col;
}

Recording to_recording(const PatientModel& model, Index sample, const Eigen::MatrixXd& scores) {
  Recording out;
  out.data = reconstruct(scores, model.decomposition, true);
  out.fs = model.fs;
  out.channel_labels = model.channel_labels;
  if (model.config.normalize) out = denormalize(out, model.norm_stats.at(static_cast<std::size_t>(sample)));
  return out;
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'')
      out += "'\\''";
    else
      out += c;
  }
  return out + "'";
}

}  // namespace

void PipelineConfig::validate() const {
  if (rank < 1) throw ParameterError("rank must be at least 1");
  changepoints.validate();
  fit.validate();
  if (states < 1) throw ParameterError("state count must be at least 1");
  divergence.validate();
  if (!(bandwidth > 0)) throw ParameterError("bandwidth must be positive");
  if (!(jitter >= 0)) throw ParameterError("jitter must be nonnegative");
  if (min_segment < 16) throw ParameterError("min_segment must be at least 16");
}

void PatientModel::validate() const {
  if (!(fs > 0)) throw DataError("model fs must be positive");
  const Index d = rank();
  const Index c = decomposition.channels();
  if (d < 1 || c < 1) throw DataError("model decomposition is empty");
  if (decomposition.column_means.size() != c || decomposition.singular_values.size() != d)
    throw DataError("decomposition fields disagree in size");
  if (static_cast<Index>(channel_labels.size()) != c) throw DataError("channel label count differs from channels");
  const Index s_count = sample_count();
  if (s_count < 1) throw DataError("model has no samples");
  const auto pairs = static_cast<std::size_t>(s_count * d);
  if (changepoints.size() != pairs || intensities.size() != pairs)
    throw DataError("changepoints and intensities must have one entry per (sample, component)");

  std::size_t seg = 0;
  for (Index s = 0; s < s_count; ++s)
    for (Index r = 0; r < d; ++r) {
      const ChangepointSet& cps = changepoints_for(s, r);
      cps.validate();
      if (cps.length() != sample_length(s)) throw DataError("components of " + where(s, r) + " differ in length");
      intensity_for(s, r).validate();
      for (Index k = 0; k < cps.segment_count(); ++k, ++seg) {
        if (seg >= segments.size()) throw DataError("missing segment model at " + where(s, r, k));
        const SegmentModel& m = segments[seg];
        if (m.sample != s || m.component != r || m.begin != cps.boundaries[static_cast<std::size_t>(k)] ||
            m.end != cps.boundaries[static_cast<std::size_t>(k + 1)])
          throw DataError("segment models do not tile " + where(s, r));
        if (!m.params.valid()) throw DataError("invalid kernel parameters at " + where(s, r, k));
      }
    }
  if (seg != segments.size()) throw DataError("more segment models than changepoint tiles");
  library.validate();
  if (library.labels.size() != segments.size()) throw DataError("state labels do not match the segment list");
}

PatientModel fit_patient(const std::vector<Recording>& recordings, const PipelineConfig& cfg) {
  cfg.validate();
  if (recordings.empty()) throw ParameterError("fit_patient needs at least one recording");

  PatientModel model;
  model.config = cfg;
  model.fs = recordings.front().fs;
  model.channel_labels = recordings.front().channel_labels;

  std::vector<Recording> prepared;
  prepared.reserve(recordings.size());
  for (std::size_t s = 0; s < recordings.size(); ++s) {
    with_context("recording " + std::to_string(s), [&] { recordings[s].validate(); });
    if (cfg.normalize) {
      auto [normed, stats] = with_context("recording " + std::to_string(s), [&] { return zscore_normalize(recordings[s]); });
      prepared.push_back(std::move(normed));
      model.norm_stats.push_back(stats);
    } else {
      prepared.push_back(recordings[s]);
      model.norm_stats.push_back(NormStats{});
    }
  }

  const SvdFit svd = fit_svd(stack_and_center(prepared), cfg.rank);
  // A component with no energy has nothing to fit, and project needs V.
  with_context("decomposition", [&] { return svd.model.right_vectors(); });
  model.decomposition = svd.model;
  const Index d = cfg.rank;
  const Index s_count = static_cast<Index>(recordings.size());

  model.changepoints.resize(static_cast<std::size_t>(s_count * d));
  detail::parallel_for(model.changepoints.size(), [&](std::size_t i) {
    const Index s = static_cast<Index>(i) / d, r = static_cast<Index>(i) % d;
    const Eigen::VectorXd col = svd.scores.sample(s).col(r);
    model.changepoints[i] = with_context(where(s, r), [&] {
      const ChangepointSet found = detect_changepoints(col, cfg.changepoints);
      return enforce_max_gap(drop_short(found, cfg.min_segment), cfg.changepoints.max_gap);
    });
  });

  std::vector<std::vector<Index>> sequences;
  for (Index s = 0; s < s_count; ++s) {
    const Eigen::MatrixXd scores = svd.scores.sample(s);
    for (Index r = 0; r < d; ++r) {
      const ChangepointSet& cps = model.changepoints_for(s, r);
      std::vector<Index> seq;
      // Segments run one after another; each fit already spreads its starts
      // and scoring draws over the available threads.
      for (Index k = 0; k < cps.segment_count(); ++k) {
        const Index b0 = cps.boundaries[static_cast<std::size_t>(k)];
        const Index b1 = cps.boundaries[static_cast<std::size_t>(k + 1)];
        const auto seed = derive_seed(cfg.seed, {stage::kFit, static_cast<std::uint64_t>(s),
                                                 static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(k)});
        SegmentModel m = with_context(where(s, r, k), [&] {
          return fit_segment(scores.col(r).segment(b0, b1 - b0), model.fs, cfg.fit, seed);
        });
        m.begin = b0;
        m.end = b1;
        m.sample = s;
        m.component = r;
        seq.push_back(static_cast<Index>(model.segments.size()));
        model.segments.push_back(m);
      }
      sequences.push_back(std::move(seq));
    }
  }

  std::vector<KernelHyperparams> params;
  params.reserve(model.segments.size());
  for (const auto& m : model.segments) params.push_back(m.params);
  DivergenceConfig div = cfg.divergence;
  div.seed = derive_seed(cfg.seed, {stage::kDivergence});
  model.library = with_context("kernel states", [&] { return build_state_library(params, sequences, cfg.states, div); });

  for (Index s = 0; s < s_count; ++s)
    for (Index r = 0; r < d; ++r) {
      const ChangepointSet& cps = model.changepoints_for(s, r);
      std::vector<double> events;
      for (Index b : cps.interior()) events.push_back(static_cast<double>(b) / model.fs);
      model.intensities.push_back(fit_intensity(std::move(events), static_cast<double>(cps.length()) / model.fs, cfg.bandwidth));
    }
  model.validate();
  return model;
}

Recording generate(const PatientModel& model, const GenerationRequest& req, GenerationTrace* trace) {
  model.validate();
  if (req.sample < 0 || req.sample >= model.sample_count())
    throw ParameterError("template sample " + std::to_string(req.sample) + " outside the model");
  if (!(req.duration > 0) || !std::isfinite(req.duration)) throw ParameterError("duration must be positive");
  const Index n = static_cast<Index>(std::floor(req.duration * model.fs));
  if (n < 1) throw ParameterError("duration is shorter than one sample");

  const Index d = model.rank();
  Eigen::MatrixXd scores(n, d);
  std::vector<ComponentTrace> comps(static_cast<std::size_t>(d));
  detail::parallel_for(comps.size(), [&](std::size_t ri) {
    const Index r = static_cast<Index>(ri);
    const auto ur = static_cast<std::uint64_t>(r);
    ComponentTrace& ct = comps[ri];

    Rng ev_rng = make_rng(req.seed, {stage::kGenerateEvents, ur});
    const std::vector<double> times = sample_events(model.intensity_for(req.sample, r), req.duration, ev_rng);
    std::vector<Index> interior;
    for (double t : times) interior.push_back(static_cast<Index>(std::llround(t * model.fs)));
    const std::vector<CpSource> tags(interior.size(), CpSource::sampled);
    ct.changepoints = enforce_max_gap(ChangepointSet::from_interior(interior, tags, n), model.config.changepoints.max_gap);

    Rng state_rng = make_rng(req.seed, {stage::kGenerateStates, ur});
    ct.states = sample_state_sequence(model.library, ct.changepoints.segment_count(), state_rng);
    std::vector<KernelHyperparams> params;
    for (Index st : ct.states) params.push_back(model.library.medoids[static_cast<std::size_t>(st)]);
    const std::vector<double> means(params.size(), 0.0);

    Rng path_rng = make_rng(req.seed, {stage::kGeneratePaths, ur});
    scores.col(r) = draw_column(ct.changepoints, params, means, model.fs, model.config.jitter, path_rng,
                                &ct.left_endpoints, "component " + std::to_string(r));
  });

  if (trace) {
    trace->scores = scores;
    trace->components = std::move(comps);
  }
  return to_recording(model, req.sample, scores);
}

std::vector<std::pair<Recording, Recording>> surrogate_pairs(const PatientModel& model,
                                                             const std::vector<Recording>& recordings,
                                                             std::uint64_t seed) {
  model.validate();
  if (static_cast<Index>(recordings.size()) != model.sample_count())
    throw ParameterError("expected " + std::to_string(model.sample_count()) + " recordings, got " +
                         std::to_string(recordings.size()));
  const Index d = model.rank();
  std::vector<std::pair<Recording, Recording>> out;
  std::size_t seg = 0;
  for (Index s = 0; s < model.sample_count(); ++s) {
    const Recording& real = recordings[static_cast<std::size_t>(s)];
    if (real.samples() != model.sample_length(s) || real.channels() != model.decomposition.channels() ||
        real.fs != model.fs)
      throw ParameterError("recording " + std::to_string(s) + " does not match the model's sample");
    Eigen::MatrixXd scores(real.samples(), d);
    for (Index r = 0; r < d; ++r) {
      const ChangepointSet& cps = model.changepoints_for(s, r);
      std::vector<KernelHyperparams> params;
      std::vector<double> means;
      for (Index k = 0; k < cps.segment_count(); ++k, ++seg) {
        params.push_back(model.segments[seg].params);
        means.push_back(model.segments[seg].mean);
      }
      Rng rng = make_rng(seed, {stage::kSurrogate, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(r)});
      scores.col(r) = draw_column(cps, params, means, model.fs, model.config.jitter, rng, nullptr, where(s, r));
    }
    out.emplace_back(to_recording(model, s, scores), real);
  }
  return out;
}

EegifyResult eegify_export(const Recording& rec, const std::filesystem::path& dir, const std::string& program,
                           Index segment_length) {
  rec.validate();
  if (segment_length < 1) throw ParameterError("segment length must be positive");
  if (rec.samples() < segment_length)
    throw ParameterError("recording has " + std::to_string(rec.samples()) + " samples, fewer than one " +
                         std::to_string(segment_length) + "-sample segment");
  namespace fs = std::filesystem;
  const fs::path segs = dir / "segs";
  fs::create_directories(segs);

  EegifyResult result;
  nlohmann::ordered_json manifest;
  manifest["format"] = "GPEG";
  manifest["version"] = 1;
  manifest["segment_length"] = segment_length;
  manifest["channels"] = rec.channels();
  manifest["fs"] = rec.fs;
  const std::vector<Recording> parts = segment(rec, segment_length, segment_length);
  manifest["dropped_tail"] = rec.samples() - static_cast<Index>(parts.size()) * segment_length;
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < parts.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "seg_%05zu.bin", i);
    const fs::path path = segs / name;
    save_recording(parts[i], path, FileFormat::raw_binary);
    result.segments.push_back(path);
    const NormStats st = zscore_normalize(parts[i]).second;
    list.push_back({{"path", (fs::path("segs") / name).string()},
                    {"begin", static_cast<Index>(i) * segment_length},
                    {"mean", st.mean},
                    {"std", st.std}});
  }
  manifest["segments"] = std::move(list);
  result.manifest = dir / "manifest.json";
  std::ofstream(result.manifest) << manifest.dump(2) << "\n";

  const fs::path weights = dir / "weights";
  if (fs::exists(weights)) {
    const std::string cmd = shell_quote(program) + " apply --weights " + shell_quote(weights.string()) + " --in " +
                            shell_quote(segs.string()) + " --out " + shell_quote((dir / "segs_out").string());
    const int status = std::system(cmd.c_str());
    result.ran = true;
    result.exit_code = status == -1 ? -1 : (WIFEXITED(status) ? WEXITSTATUS(status) : 128);
  }
  return result;
}

}  // namespace qpsynth
