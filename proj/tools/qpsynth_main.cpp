#include "qpsynth/errors.hpp"
#include "qpsynth/fixture.hpp"
#include "qpsynth/metrics.hpp"
#include "qpsynth/model_io.hpp"
#include "qpsynth/pipeline.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace qpsynth;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kNumerical = 4 };

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::vector<Recording> load_all(const std::vector<std::string>& paths) {
  std::vector<Recording> out;
  for (const auto& p : paths) out.push_back(load_recording(p));
  return out;
}

int run_fixture(const std::string& spec_path, std::uint64_t seed, const std::string& out, const std::string& truth) {
  const Fixture f = make_fixture(load_fixture_spec(spec_path), seed);
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  save_recording(f.recording, out);
  if (!truth.empty()) write_text(truth, nlohmann::json{{"changepoints", f.changepoints}}.dump() + "\n");
  return kOk;
}

int run_fit(const std::vector<std::string>& inputs, const std::string& config, const std::string& out,
            const std::optional<std::uint64_t>& seed) {
  PipelineConfig cfg = config.empty() ? PipelineConfig{} : load_config(config);
  if (seed) cfg.seed = *seed;
  const PatientModel model = fit_patient(load_all(inputs), cfg);
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  save_model(model, out);
  std::cerr << "fitted " << model.segments.size() << " segments into " << model.library.states() << " kernel states\n";
  return kOk;
}

int run_generate(const std::string& model_path, Index sample, double duration, std::uint64_t seed,
                 const std::string& out, const std::string& eegify_dir, const std::string& eegify_program) {
  const PatientModel model = load_model(model_path);
  const Recording rec = generate(model, {sample, duration, seed});
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  save_recording(rec, out);
  if (!eegify_dir.empty()) {
    const EegifyResult r = eegify_export(rec, eegify_dir, eegify_program);
    std::cerr << "wrote " << r.segments.size() << " segments and " << r.manifest.string() << "\n";
    if (r.ran && r.exit_code != 0) {
      std::cerr << "error: eegify apply exited with status " << r.exit_code << "\n";
      return kData;
    }
    if (!r.ran) std::cerr << "no weights in " << eegify_dir << "; left the raw segments in place\n";
  }
  return kOk;
}

int run_surrogates(const std::string& model_path, const std::vector<std::string>& inputs, const std::string& out,
                   std::uint64_t seed) {
  const PatientModel model = load_model(model_path);
  const auto pairs = surrogate_pairs(model, load_all(inputs), seed);
  const fs::path dir(out);
  fs::create_directories(dir / "surrogate");
  fs::create_directories(dir / "real");
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "pair_%05zu.bin", i);
    save_recording(pairs[i].first, dir / "surrogate" / name, FileFormat::raw_binary);
    save_recording(pairs[i].second, dir / "real" / name, FileFormat::raw_binary);
    const NormStats st = model.norm_stats[i];
    list.push_back({{"surrogate", (fs::path("surrogate") / name).string()},
                    {"real", (fs::path("real") / name).string()},
                    {"mean", st.mean},
                    {"std", st.std}});
  }
  write_text(dir / "manifest.json", nlohmann::ordered_json{{"format", "GPEG"}, {"version", 1}, {"pairs", list}}.dump(2) + "\n");
  return kOk;
}

int run_evaluate(const std::string& real, const std::string& synth, const std::string& out, int bins, int max_lag) {
  MetricsConfig cfg;
  cfg.bins = bins;
  cfg.max_lag = max_lag;
  const MetricsReport report = evaluate(real, synth, cfg);
  write_text(out, report.to_json());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quasi-periodic GP synthesis of multichannel time series"};
  app.require_subcommand(1);

  auto* fixture = app.add_subcommand("fixture", "Write a synthetic recording from a JSON fixture spec");
  std::string spec, fixture_out, truth;
  std::uint64_t fixture_seed = 0;
  fixture->add_option("--spec", spec, "Fixture spec JSON")->required()->check(CLI::ExistingFile);
  fixture->add_option("--seed", fixture_seed, "Random seed");
  fixture->add_option("--out", fixture_out, "Output recording (.csv or binary)")->required();
  fixture->add_option("--truth", truth, "Optional JSON file for the true changepoints");

  auto* fit = app.add_subcommand("fit", "Fit a patient model");
  std::vector<std::string> fit_inputs;
  std::string fit_config, fit_out;
  std::optional<std::uint64_t> fit_seed;
  fit->add_option("--input", fit_inputs, "Recordings")->required()->check(CLI::ExistingFile);
  fit->add_option("--config", fit_config, "Flat JSON config")->check(CLI::ExistingFile);
  fit->add_option("--seed", fit_seed, "Override the config seed");
  fit->add_option("--out", fit_out, "Model JSON")->required();

  auto* gen = app.add_subcommand("generate", "Generate a synthetic recording from a model");
  std::string gen_model, gen_out, eegify_dir, eegify_program = "eegify";
  Index gen_sample = 0;
  double duration = 0;
  std::uint64_t gen_seed = 0;
  gen->add_option("--model", gen_model, "Model JSON")->required()->check(CLI::ExistingFile);
  gen->add_option("--sample", gen_sample, "Template sample index");
  gen->add_option("--duration", duration, "Seconds")->required();
  gen->add_option("--seed", gen_seed, "Random seed");
  gen->add_option("--out", gen_out, "Output recording")->required();
  gen->add_option("--eegify", eegify_dir, "Export segments and a manifest for the eegifier");
  gen->add_option("--eegify-program", eegify_program, "eegifier executable");

  auto* sur = app.add_subcommand("surrogates", "Draw surrogate/real pairs from the empirical fit");
  std::string sur_model, sur_out;
  std::vector<std::string> sur_inputs;
  std::uint64_t sur_seed = 0;
  sur->add_option("--model", sur_model, "Model JSON")->required()->check(CLI::ExistingFile);
  sur->add_option("--input", sur_inputs, "The recordings the model was fit on")->required()->check(CLI::ExistingFile);
  sur->add_option("--seed", sur_seed, "Random seed");
  sur->add_option("--out", sur_out, "Output directory")->required();

  auto* eval = app.add_subcommand("evaluate", "Compare real and synthetic recording sets");
  std::string real_dir, synth_dir, report_out;
  int bins = 50, max_lag = 63;
  eval->add_option("--real", real_dir, "Directory of real recordings")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--synth", synth_dir, "Directory of synthetic recordings")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--out", report_out, "Report JSON")->required();
  eval->add_option("--bins", bins, "Histogram bins");
  eval->add_option("--max-lag", max_lag, "Largest autocorrelation lag");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*fixture) return run_fixture(spec, fixture_seed, fixture_out, truth);
    if (*fit) return run_fit(fit_inputs, fit_config, fit_out, fit_seed);
    if (*gen) return run_generate(gen_model, gen_sample, duration, gen_seed, gen_out, eegify_dir, eegify_program);
    if (*sur) return run_surrogates(sur_model, sur_inputs, sur_out, sur_seed);
    if (*eval) return run_evaluate(real_dir, synth_dir, report_out, bins, max_lag);
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const FitError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const RankDeficiencyError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
