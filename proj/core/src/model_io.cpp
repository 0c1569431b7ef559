#include "qpsynth/model_io.hpp"

#include "qpsynth/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

namespace qpsynth {

namespace {

using json = nlohmann::ordered_json;

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json mat_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) rows.push_back(vec_json(m.row(i).transpose()));
  return rows;
}

Eigen::VectorXd vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
}

Eigen::MatrixXd mat_from(const json& j, Index cols_if_empty = 0) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  const Index r = static_cast<Index>(rows.size());
  const Index c = rows.empty() ? cols_if_empty : static_cast<Index>(rows.front().size());
  Eigen::MatrixXd m(r, c);
  for (Index i = 0; i < r; ++i) {
    if (static_cast<Index>(rows[static_cast<std::size_t>(i)].size()) != c) throw FormatError("ragged matrix in model file");
    for (Index k = 0; k < c; ++k) m(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  }
  return m;
}

json params_json(const KernelHyperparams& p) {
  return {{"sigma_f2", p.sigma_f2}, {"ell_p", p.ell_p}, {"period", p.period}, {"ell_m", p.ell_m}, {"noise_var", p.noise_var}};
}

KernelHyperparams params_from(const json& j) {
  KernelHyperparams p;
  p.sigma_f2 = j.at("sigma_f2").get<double>();
  p.ell_p = j.at("ell_p").get<double>();
  p.period = j.at("period").get<double>();
  p.ell_m = j.at("ell_m").get<double>();
  p.noise_var = j.at("noise_var").get<double>();
  return p;
}

std::string lag_name(LagSelection l) { return l == LagSelection::aic ? "aic" : "fixed"; }
LagSelection lag_from(const std::string& s) {
  if (s == "aic") return LagSelection::aic;
  if (s == "fixed") return LagSelection::fixed;
  throw FormatError("adf_lags must be \"aic\" or \"fixed\", got \"" + s + "\"");
}

std::string mode_name(DivergenceMode m) { return m == DivergenceMode::jeffreys ? "jeffreys" : "monte_carlo_js"; }
DivergenceMode mode_from(const std::string& s) {
  if (s == "jeffreys") return DivergenceMode::jeffreys;
  if (s == "monte_carlo_js") return DivergenceMode::monte_carlo_js;
  throw FormatError("divergence_mode must be \"jeffreys\" or \"monte_carlo_js\", got \"" + s + "\"");
}

// One entry per flat config key: writer and reader.
struct ConfigKey {
  const char* name;
  std::function<json(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, const json&)> set;
};

template <class T, class Field>
ConfigKey plain(const char* name, Field field) {
  return {name, [field](const PipelineConfig& c) { return json(field(c)); },
          [field](PipelineConfig& c, const json& j) { field(c) = j.get<T>(); }};
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      plain<Index>("rank", [](auto& c) -> auto& { return c.rank; }),
      plain<Index>("window", [](auto& c) -> auto& { return c.changepoints.window; }),
      plain<Index>("step", [](auto& c) -> auto& { return c.changepoints.step; }),
      plain<double>("alpha", [](auto& c) -> auto& { return c.changepoints.alpha; }),
      plain<Index>("max_gap", [](auto& c) -> auto& { return c.changepoints.max_gap; }),
      plain<Index>("merge_tol", [](auto& c) -> auto& { return c.changepoints.merge_tol; }),
      {"adf_lags", [](const PipelineConfig& c) { return json(lag_name(c.changepoints.adf_lags)); },
       [](PipelineConfig& c, const json& j) { c.changepoints.adf_lags = lag_from(j.get<std::string>()); }},
      plain<Index>("confirm", [](auto& c) -> auto& { return c.changepoints.confirm; }),
      plain<double>("subsample_frac", [](auto& c) -> auto& { return c.fit.subsample_frac; }),
      plain<double>("selection_frac", [](auto& c) -> auto& { return c.fit.selection_frac; }),
      plain<int>("epochs", [](auto& c) -> auto& { return c.fit.epochs; }),
      plain<double>("learning_rate", [](auto& c) -> auto& { return c.fit.learning_rate; }),
      plain<double>("adam_beta1", [](auto& c) -> auto& { return c.fit.adam_beta1; }),
      plain<double>("adam_beta2", [](auto& c) -> auto& { return c.fit.adam_beta2; }),
      plain<double>("fit_jitter", [](auto& c) -> auto& { return c.fit.jitter; }),
      plain<double>("noise_frac", [](auto& c) -> auto& { return c.fit.noise_frac; }),
      plain<int>("score_samples", [](auto& c) -> auto& { return c.fit.score_samples; }),
      plain<Index>("score_grid", [](auto& c) -> auto& { return c.fit.score_grid; }),
      plain<double>("score_horizon", [](auto& c) -> auto& { return c.fit.score_horizon; }),
      plain<double>("admissible_loglik_drop", [](auto& c) -> auto& { return c.fit.admissible_loglik_drop; }),
      {"bands",
       [](const PipelineConfig& c) {
         json b = json::array();
         for (const Band& band : c.fit.bands) b.push_back({band.lo, band.hi});
         return b;
       },
       [](PipelineConfig& c, const json& j) {
         c.fit.bands.clear();
         for (const auto& b : j) {
           if (!b.is_array() || b.size() != 2) throw FormatError("each band must be [lo, hi]");
           c.fit.bands.push_back({b[0].get<double>(), b[1].get<double>()});
         }
       }},
      plain<Index>("states", [](auto& c) -> auto& { return c.states; }),
      plain<Index>("divergence_grid", [](auto& c) -> auto& { return c.divergence.grid_size; }),
      plain<double>("divergence_horizon", [](auto& c) -> auto& { return c.divergence.horizon; }),
      plain<double>("divergence_jitter", [](auto& c) -> auto& { return c.divergence.jitter; }),
      {"divergence_mode", [](const PipelineConfig& c) { return json(mode_name(c.divergence.mode)); },
       [](PipelineConfig& c, const json& j) { c.divergence.mode = mode_from(j.get<std::string>()); }},
      plain<int>("divergence_mc_samples", [](auto& c) -> auto& { return c.divergence.mc_samples; }),
      plain<double>("bandwidth", [](auto& c) -> auto& { return c.bandwidth; }),
      plain<double>("jitter", [](auto& c) -> auto& { return c.jitter; }),
      plain<Index>("min_segment", [](auto& c) -> auto& { return c.min_segment; }),
      plain<bool>("normalize", [](auto& c) -> auto& { return c.normalize; }),
      plain<std::uint64_t>("seed", [](auto& c) -> auto& { return c.seed; }),
  };
  return keys;
}

json config_json(const PipelineConfig& cfg) {
  json j = json::object();
  for (const auto& k : config_keys()) j[k.name] = k.get(cfg);
  return j;
}

PipelineConfig config_from(const json& j) {
  if (!j.is_object()) throw FormatError("config must be a JSON object");
  PipelineConfig cfg;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& keys = config_keys();
    auto k = std::find_if(keys.begin(), keys.end(), [&](const ConfigKey& c) { return it.key() == c.name; });
    if (k == keys.end()) throw FormatError("unknown config key \"" + it.key() + "\"");
    try {
      k->set(cfg, it.value());
    } catch (const json::exception& e) {
      throw FormatError("config key \"" + it.key() + "\": " + e.what());
    }
  }
  return cfg;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string model_to_json(const PatientModel& m) {
  json j;
  j["format_version"] = m.format_version;
  j["fs"] = m.fs;
  j["channel_labels"] = m.channel_labels;
  j["decomposition"] = {{"loadings", mat_json(m.decomposition.loadings)},
                        {"column_means", vec_json(m.decomposition.column_means)},
                        {"singular_values", vec_json(m.decomposition.singular_values)}};
  json norms = json::array();
  for (const auto& n : m.norm_stats) norms.push_back({{"mean", n.mean}, {"std", n.std}, {"scope", "per_segment_global"}});
  j["norm_stats"] = std::move(norms);
  json cps = json::array();
  for (const auto& c : m.changepoints) {
    json src = json::array();
    for (CpSource s : c.sources) src.push_back(std::string(to_string(s)));
    cps.push_back({{"boundaries", c.boundaries}, {"sources", std::move(src)}});
  }
  j["changepoints"] = std::move(cps);
  json inten = json::array();
  for (const auto& i : m.intensities)
    inten.push_back({{"event_times", i.event_times}, {"bandwidth", i.bandwidth}, {"horizon", i.horizon}});
  j["intensities"] = std::move(inten);
  json segs = json::array();
  for (const auto& s : m.segments)
    segs.push_back({{"sample", s.sample},
                    {"component", s.component},
                    {"begin", s.begin},
                    {"end", s.end},
                    {"fit_score", s.fit_score},
                    {"mean", s.mean},
                    {"params", params_json(s.params)}});
  j["segments"] = std::move(segs);
  json medoids = json::array();
  for (const auto& p : m.library.medoids) medoids.push_back(params_json(p));
  j["library"] = {{"medoids", std::move(medoids)},
                  {"transition", mat_json(m.library.transition)},
                  {"initial", vec_json(m.library.initial)},
                  {"labels", m.library.labels},
                  {"divergence_grid", vec_json(m.library.divergence_grid)}};
  j["config"] = config_json(m.config);
  return j.dump(1) + "\n";
}

PatientModel model_from_json(const std::string& text) {
  PatientModel m;
  try {
    const json j = json::parse(text);
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion)
      throw FormatError("unsupported model format_version " + std::to_string(version) + " (expected " +
                        std::to_string(kModelFormatVersion) + ")");
    m.format_version = version;
    m.fs = j.at("fs").get<double>();
    m.channel_labels = j.at("channel_labels").get<std::vector<std::string>>();
    const json& dec = j.at("decomposition");
    m.decomposition.loadings = mat_from(dec.at("loadings"));
    m.decomposition.column_means = vec_from(dec.at("column_means"));
    m.decomposition.singular_values = vec_from(dec.at("singular_values"));
    for (const auto& n : j.at("norm_stats")) {
      if (n.value("scope", "per_segment_global") != "per_segment_global") throw FormatError("unknown norm scope");
      m.norm_stats.push_back(NormStats{n.at("mean").get<double>(), n.at("std").get<double>()});
    }
    for (const auto& c : j.at("changepoints")) {
      ChangepointSet s;
      s.boundaries = c.at("boundaries").get<std::vector<Index>>();
      for (const auto& name : c.at("sources")) s.sources.push_back(cp_source_from_string(name.get<std::string>()));
      m.changepoints.push_back(std::move(s));
    }
    for (const auto& i : j.at("intensities")) {
      IntensityModel im;
      im.event_times = i.at("event_times").get<std::vector<double>>();
      im.bandwidth = i.at("bandwidth").get<double>();
      im.horizon = i.at("horizon").get<double>();
      m.intensities.push_back(std::move(im));
    }
    for (const auto& s : j.at("segments")) {
      SegmentModel sm;
      sm.sample = s.at("sample").get<Index>();
      sm.component = s.at("component").get<Index>();
      sm.begin = s.at("begin").get<Index>();
      sm.end = s.at("end").get<Index>();
      sm.fit_score = s.at("fit_score").get<double>();
      sm.mean = s.at("mean").get<double>();
      sm.params = params_from(s.at("params"));
      m.segments.push_back(sm);
    }
    const json& lib = j.at("library");
    for (const auto& p : lib.at("medoids")) m.library.medoids.push_back(params_from(p));
    m.library.transition = mat_from(lib.at("transition"));
    m.library.initial = vec_from(lib.at("initial"));
    m.library.labels = lib.at("labels").get<std::vector<Index>>();
    m.library.divergence_grid = vec_from(lib.at("divergence_grid"));
    m.config = config_from(j.at("config"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed model file: ") + e.what());
  }
  m.validate();
  return m;
}

void save_model(const PatientModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << model_to_json(model);
  if (!out) throw FormatError("write failed for " + path.string());
}

PatientModel load_model(const std::filesystem::path& path) { return model_from_json(read_file(path)); }

PipelineConfig config_from_json(const std::string& text) {
  try {
    return config_from(json::parse(text));
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed config: ") + e.what());
  }
}

std::string config_to_json(const PipelineConfig& cfg) { return config_json(cfg).dump(2) + "\n"; }

PipelineConfig load_config(const std::filesystem::path& path) { return config_from_json(read_file(path)); }

}  // namespace qpsynth
