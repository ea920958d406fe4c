#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "ensplan/harness.hpp"
#include "ensplan/performance.hpp"
#include "ensplan/router.hpp"
#include "ensplan/stochastic.hpp"
#include "ensplan/weather.hpp"

namespace ensplan {

/// TOML document as JSON (tables become objects). Throws ConfigError.
nlohmann::json parse_toml(const std::string& text, const std::string& source = "<string>");
nlohmann::json load_toml(const std::filesystem::path& path);

// Section mappers. Keys absent from `j` keep the value in `base`; unknown
// keys are rejected with ConfigError.
SyntheticWeatherSpec weather_spec_from_json(const nlohmann::json& j, SyntheticWeatherSpec base = {});
LatticeConfig lattice_config_from_json(const nlohmann::json& j, LatticeConfig base = {});
harness::GridConfig grid_config_from_json(const nlohmann::json& j, harness::GridConfig base = {});
PayloadDistribution payload_from_json(const nlohmann::json& j);
Airport airport_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SyntheticWeatherSpec& s);
nlohmann::json to_json(const LatticeConfig& c);
nlohmann::json to_json(const harness::GridConfig& g);

/// `aircraft = "widebody"` names a bundled model; `aircraft_file` a JSON file
/// resolved against `base_dir`.
AircraftModel aircraft_from_config(const nlohmann::json& section, const std::filesystem::path& base_dir);

/// One flight for `plan` and `splan`.
struct FlightConfig {
  Airport origin;
  Airport destination;
  double departure_h = 3.0;
  AircraftModel aircraft = bundled_aircraft("widebody");
  CostIndex ci{};
  PayloadDistribution payload = PayloadDistribution::explicit_sigma(30000.0, 0.0);
  SyntheticWeatherSpec weather{};
  LatticeConfig lattice{};
  harness::GridConfig grid{};
  Criterion criterion = Criterion::ExpectedValue;
  std::size_t payload_samples = 1;
  bool include_control = false;
  std::optional<double> infeasible_penalty;
  std::size_t workers = 0;
};

FlightConfig flight_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const FlightConfig& c);

/// `[experiment]` plus the shared sections, for `compare` and `payload-study`.
harness::ExperimentConfig experiment_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const harness::ExperimentConfig& c);

/// `[predict]` for `predict-cv`. Without `data` the dataset is generated
/// from the experiment sections.
struct PredictConfig {
  harness::ExperimentConfig experiment{};
  std::size_t folds = 10;
  std::uint64_t cv_seed = 1;
  std::optional<std::filesystem::path> data;  // CSV, resolved against the config directory
  bool nowcast_is_control = false;
};

PredictConfig predict_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const PredictConfig& c);

}  // namespace ensplan
