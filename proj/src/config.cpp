#include "ensplan/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "ensplan/error.hpp"
#include "ensplan/run_store.hpp"

namespace ensplan {

namespace {

using nlohmann::json;

// Reads keys out of one JSON object and rejects whatever is left over.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("[" + name_ + "] must be a table");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("[" + name_ + "] " + key + ": wrong type (" + j_.at(key).dump() + ")");
    }
  }

  template <typename T>
  void read(const char* key, std::optional<T>& out) {
    T v{};
    seen_.insert(key);
    if (!j_.contains(key)) return;
    read(key, v);
    out = v;
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& at(const char* key) const { return j_.at(key); }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("[" + name_ + "] unknown key '" + k + "'");
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

template <typename Fn>
auto wrap_invalid(const std::string& what, Fn&& fn) {
  try {
    return fn();
  } catch (const InvalidSpec& e) {
    throw ConfigError(what + ": " + e.what());
  } catch (const BadLevel& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

json section_or_empty(const json& doc, const char* key) {
  if (doc.contains(key)) return doc.at(key);
  return json::object();
}

}  // namespace

json parse_toml(const std::string& text, const std::string& source) {
  try {
    const toml::table tbl = toml::parse(text, source);
    std::ostringstream os;
    os << toml::json_formatter{tbl};
    return json::parse(os.str());
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << source << ":" << e.source().begin.line << ":" << e.source().begin.column << ": " << e.description();
    throw ConfigError(os.str());
  }
}

json load_toml(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_toml(ss.str(), path.string());
}

SyntheticWeatherSpec weather_spec_from_json(const json& j, SyntheticWeatherSpec s) {
  Section r(j, "weather");
  r.read("jet_peak", s.jet_peak);
  r.read("jet_center_lat", s.jet_center_lat);
  r.read("jet_width_deg", s.jet_width_deg);
  r.read("jet_core_hpa", s.jet_core_hpa);
  r.read("jet_depth_hpa", s.jet_depth_hpa);
  r.read("meander_amplitude_deg", s.meander_amplitude_deg);
  r.read("meander_wavelength_deg", s.meander_wavelength_deg);
  r.read("meander_phase_speed", s.meander_phase_speed);
  r.read("background_u", s.background_u);
  r.read("perturbation_sigma", s.perturbation_sigma);
  r.read("jet_shift_sigma_deg", s.jet_shift_sigma_deg);
  r.read("control_sigma", s.control_sigma);
  r.read("control_jet_shift_sigma_deg", s.control_jet_shift_sigma_deg);
  r.read("nowcast_sigma", s.nowcast_sigma);
  r.read("nowcast_jet_shift_sigma_deg", s.nowcast_jet_shift_sigma_deg);
  r.read("correlation_length_deg", s.correlation_length_deg);
  r.read("correlation_time_h", s.correlation_time_h);
  r.read("correlation_levels", s.correlation_levels);
  r.read("n_members", s.n_members);
  r.read("seed", s.seed);
  r.read("issuance_time", s.issuance_time);
  r.finish();
  wrap_invalid("[weather]", [&] {
    s.validate();
    return 0;
  });
  return s;
}

LatticeConfig lattice_config_from_json(const json& j, LatticeConfig c) {
  Section r(j, "lattice");
  r.read("n_layers", c.n_layers);
  r.read("n_offsets", c.n_offsets);
  r.read("max_offset_deg", c.max_offset_deg);
  r.read("lateral_reach", c.lateral_reach);
  r.read("levels", c.levels);
  r.finish();
  return c;
}

harness::GridConfig grid_config_from_json(const json& j, harness::GridConfig g) {
  Section r(j, "grid");
  r.read("step_deg", g.step_deg);
  r.read("margin_deg", g.margin_deg);
  r.read("levels_hpa", g.levels_hpa);
  r.read("time_step_h", g.time_step_h);
  r.finish();
  if (!(g.step_deg > 0.0) || !(g.margin_deg >= 0.0) || !(g.time_step_h > 0.0))
    throw ConfigError("[grid] step, margin and time step must be positive");
  return g;
}

PayloadDistribution payload_from_json(const json& j) {
  Section r(j, "payload");
  double mean = 0.0;
  std::optional<double> sigma, per_pax, n_pax, fraction;
  if (!r.has("mean")) throw ConfigError("[payload] mean is required");
  r.read("mean", mean);
  r.read("sigma", sigma);
  r.read("per_passenger_sigma", per_pax);
  r.read("n_passengers", n_pax);
  r.read("fraction", fraction);
  r.finish();
  const int forms = (sigma ? 1 : 0) + ((per_pax || n_pax) ? 1 : 0) + (fraction ? 1 : 0);
  if (forms > 1) throw ConfigError("[payload] give one of sigma, per_passenger_sigma + n_passengers, or fraction");
  return wrap_invalid("[payload]", [&] {
    PayloadDistribution d;
    if (per_pax || n_pax) {
      if (!per_pax || !n_pax) throw ConfigError("[payload] per_passenger_sigma needs n_passengers");
      d = PayloadDistribution::from_passengers(mean, *per_pax, *n_pax);
    } else if (fraction) {
      d = PayloadDistribution::fraction_of_mean(mean, *fraction);
    } else {
      d = PayloadDistribution::explicit_sigma(mean, sigma.value_or(0.0));
    }
    d.validate();
    return d;
  });
}

Airport airport_from_json(const json& j) {
  Section r(j, "airport");
  Airport a;
  if (!r.has("code") || !r.has("lat") || !r.has("lon")) throw ConfigError("airport needs code, lat and lon");
  r.read("code", a.code);
  r.read("lat", a.pos.lat);
  r.read("lon", a.pos.lon);
  r.finish();
  return a;
}

json to_json(const SyntheticWeatherSpec& s) {
  return {{"jet_peak", s.jet_peak},
          {"jet_center_lat", s.jet_center_lat},
          {"jet_width_deg", s.jet_width_deg},
          {"jet_core_hpa", s.jet_core_hpa},
          {"jet_depth_hpa", s.jet_depth_hpa},
          {"meander_amplitude_deg", s.meander_amplitude_deg},
          {"meander_wavelength_deg", s.meander_wavelength_deg},
          {"meander_phase_speed", s.meander_phase_speed},
          {"background_u", s.background_u},
          {"perturbation_sigma", s.perturbation_sigma},
          {"jet_shift_sigma_deg", s.jet_shift_sigma_deg},
          {"control_sigma", s.control_sigma},
          {"control_jet_shift_sigma_deg", s.control_jet_shift_sigma_deg},
          {"nowcast_sigma", s.nowcast_sigma},
          {"nowcast_jet_shift_sigma_deg", s.nowcast_jet_shift_sigma_deg},
          {"correlation_length_deg", s.correlation_length_deg},
          {"correlation_time_h", s.correlation_time_h},
          {"correlation_levels", s.correlation_levels},
          {"n_members", s.n_members},
          {"seed", s.seed},
          {"issuance_time", s.issuance_time}};
}

json to_json(const LatticeConfig& c) {
  return {{"n_layers", c.n_layers},
          {"n_offsets", c.n_offsets},
          {"max_offset_deg", c.max_offset_deg},
          {"lateral_reach", c.lateral_reach},
          {"levels", c.levels}};
}

json to_json(const harness::GridConfig& g) {
  return {{"step_deg", g.step_deg}, {"margin_deg", g.margin_deg}, {"levels_hpa", g.levels_hpa}, {"time_step_h", g.time_step_h}};
}

AircraftModel aircraft_from_config(const json& section, const std::filesystem::path& base_dir) {
  if (section.contains("aircraft_file")) {
    std::filesystem::path p = section.at("aircraft_file").get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    try {
      return load_aircraft(p);
    } catch (const IoError& e) {
      throw ConfigError(e.what());
    }
  }
  const std::string name = section.value("aircraft", std::string("widebody"));
  try {
    return bundled_aircraft(name);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

FlightConfig flight_config_from_json(const json& doc, const std::filesystem::path& base_dir) {
  FlightConfig c;
  try {
    for (const auto& [k, v] : doc.items()) {
      static const std::set<std::string> known = {"flight", "payload", "stochastic", "weather", "lattice", "grid", "experiment", "predict"};
      if (!known.count(k)) throw ConfigError("unknown section [" + k + "]");
    }
    if (!doc.contains("flight")) throw ConfigError("missing [flight] section");
    {
      Section r(doc.at("flight"), "flight");
      if (!r.has("origin") || !r.has("destination")) throw ConfigError("[flight] needs origin and destination");
      c.origin = airport_from_json(r.at("origin"));
      c.destination = airport_from_json(r.at("destination"));
      r.read("departure_h", c.departure_h);
      r.read("cost_index", c.ci.ci);
      r.has("aircraft");
      r.has("aircraft_file");
      r.finish();
      c.aircraft = aircraft_from_config(doc.at("flight"), base_dir);
    }
    if (doc.contains("payload")) c.payload = payload_from_json(doc.at("payload"));
    if (doc.contains("stochastic")) {
      Section r(doc.at("stochastic"), "stochastic");
      std::string crit = to_string(c.criterion);
      r.read("criterion", crit);
      c.criterion = parse_criterion(crit);
      r.read("payload_samples", c.payload_samples);
      r.read("include_control", c.include_control);
      r.read("infeasible_penalty", c.infeasible_penalty);
      r.read("workers", c.workers);
      r.finish();
      if (c.payload_samples == 0) throw ConfigError("[stochastic] payload_samples must be >= 1");
    }
    c.weather = weather_spec_from_json(section_or_empty(doc, "weather"), c.weather);
    c.lattice = lattice_config_from_json(section_or_empty(doc, "lattice"), c.lattice);
    c.grid = grid_config_from_json(section_or_empty(doc, "grid"), c.grid);
    if (!(c.departure_h >= 0.0)) throw ConfigError("[flight] departure_h must be >= 0");
    if (!(c.ci.ci >= 0.0)) throw ConfigError("[flight] cost_index must be >= 0");
  } catch (const json::exception& e) {
    throw ConfigError(e.what());
  }
  return c;
}

json to_json(const FlightConfig& c) {
  json pen = c.infeasible_penalty ? json(*c.infeasible_penalty) : json(nullptr);
  return {{"flight",
           {{"origin", {{"code", c.origin.code}, {"lat", c.origin.pos.lat}, {"lon", c.origin.pos.lon}}},
            {"destination", {{"code", c.destination.code}, {"lat", c.destination.pos.lat}, {"lon", c.destination.pos.lon}}},
            {"departure_h", c.departure_h},
            {"cost_index", c.ci.ci},
            {"aircraft_model", aircraft_to_json(c.aircraft)}}},
          {"payload", to_json(c.payload)},
          {"stochastic",
           {{"criterion", to_string(c.criterion)},
            {"payload_samples", c.payload_samples},
            {"include_control", c.include_control},
            {"infeasible_penalty", pen}}},
          {"weather", to_json(c.weather)},
          {"lattice", to_json(c.lattice)},
          {"grid", to_json(c.grid)}};
}

harness::ExperimentConfig experiment_from_json(const json& doc, const std::filesystem::path& base_dir) {
  harness::ExperimentConfig c;
  try {
    for (const auto& [k, v] : doc.items()) {
      static const std::set<std::string> known = {"experiment", "payload", "weather", "lattice", "grid", "predict", "flight", "stochastic"};
      if (!known.count(k)) throw ConfigError("unknown section [" + k + "]");
    }
    if (doc.contains("experiment")) {
      const json& ej = doc.at("experiment");
      Section r(ej, "experiment");
      r.read("n_flights", c.n_flights);
      r.read("seed", c.seed);
      r.read("departure_h", c.departure_h);
      r.read("cost_index", c.ci.ci);
      r.read("tie_tolerance_kg", c.tie_tolerance_kg);
      r.read("histogram_bins", c.histogram_bins);
      r.read("payload_samples", c.payload_samples);
      r.read("workers", c.workers);
      r.has("aircraft");
      r.has("aircraft_file");
      if (r.has("city_pairs")) {
        c.city_pairs.clear();
        for (const auto& p : ej.at("city_pairs")) {
          Section pr(p, "experiment.city_pairs");
          if (!pr.has("origin") || !pr.has("destination")) throw ConfigError("city pair needs origin and destination");
          c.city_pairs.push_back({airport_from_json(p.at("origin")), airport_from_json(p.at("destination"))});
          pr.finish();
        }
      }
      r.finish();
      if (ej.contains("aircraft") || ej.contains("aircraft_file")) c.aircraft = aircraft_from_config(ej, base_dir);
    }
    if (doc.contains("payload")) c.payload = payload_from_json(doc.at("payload"));
    c.weather = weather_spec_from_json(section_or_empty(doc, "weather"), c.weather);
    c.lattice = lattice_config_from_json(section_or_empty(doc, "lattice"), c.lattice);
    c.grid = grid_config_from_json(section_or_empty(doc, "grid"), c.grid);
    wrap_invalid("[experiment]", [&] {
      c.validate();
      return 0;
    });
  } catch (const json::exception& e) {
    throw ConfigError(e.what());
  }
  return c;
}

json to_json(const harness::ExperimentConfig& c) {
  json pairs = json::array();
  for (const auto& p : c.city_pairs) {
    pairs.push_back({{"origin", {{"code", p.origin.code}, {"lat", p.origin.pos.lat}, {"lon", p.origin.pos.lon}}},
                     {"destination",
                      {{"code", p.destination.code}, {"lat", p.destination.pos.lat}, {"lon", p.destination.pos.lon}}}});
  }
  return {{"experiment",
           {{"n_flights", c.n_flights},
            {"seed", c.seed},
            {"departure_h", c.departure_h},
            {"cost_index", c.ci.ci},
            {"tie_tolerance_kg", c.tie_tolerance_kg},
            {"histogram_bins", c.histogram_bins},
            {"payload_samples", c.payload_samples},
            {"aircraft_model", aircraft_to_json(c.aircraft)},
            {"city_pairs", pairs}}},
          {"payload", to_json(c.payload)},
          {"weather", to_json(c.weather)},
          {"lattice", to_json(c.lattice)},
          {"grid", to_json(c.grid)}};
}

PredictConfig predict_config_from_json(const json& doc, const std::filesystem::path& base_dir) {
  PredictConfig c;
  c.experiment = experiment_from_json(doc, base_dir);
  if (doc.contains("predict")) {
    Section r(doc.at("predict"), "predict");
    r.read("folds", c.folds);
    r.read("seed", c.cv_seed);
    r.read("nowcast_is_control", c.nowcast_is_control);
    std::optional<std::string> data;
    r.read("data", data);
    r.finish();
    if (data) {
      c.data = base_dir / *data;
      if (!std::filesystem::is_regular_file(*c.data)) throw ConfigError("[predict] data: no file " + c.data->string());
    }
  }
  if (c.folds < 2) throw ConfigError("[predict] folds must be >= 2");
  return c;
}

json to_json(const PredictConfig& c) {
  json j = to_json(c.experiment);
  j["predict"] = {{"folds", c.folds},
                  {"seed", c.cv_seed},
                  {"nowcast_is_control", c.nowcast_is_control},
                  // Content, not location, identifies the dataset.
                  {"data_sha256", c.data ? json(sha256_file(*c.data)) : json(nullptr)}};
  return j;
}

}  // namespace ensplan
