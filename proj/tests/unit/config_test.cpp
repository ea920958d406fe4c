#include <doctest.h>

#include <nlohmann/json.hpp>

#include "ensplan/config.hpp"
#include "ensplan/error.hpp"
#include "fixtures.hpp"

using namespace ensplan;

TEST_CASE("flight config from TOML") {
  const auto doc = parse_toml(fixture::small_flight_toml());
  const auto c = flight_config_from_json(doc);
  CHECK(c.origin.code == "SNN");
  CHECK(c.destination.pos.lat == 63.99);
  CHECK(c.ci.ci == 15.0);
  CHECK(c.aircraft.name == "narrowbody");
  CHECK(c.payload.mean == 12000.0);
  CHECK(c.payload.sigma_total == 800.0);
  CHECK(c.weather.n_members == 6);
  CHECK(c.lattice.n_offsets == 3);
  // The resolved form carries the full aircraft model, not just its name.
  CHECK(to_json(c)["flight"]["aircraft_model"] == aircraft_to_json(c.aircraft));
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_toml("[flight\norigin = 1"), ConfigError);
  CHECK_THROWS_AS(flight_config_from_json(parse_toml(fixture::small_flight_toml(12000, "[bogus]\nx = 1\n"))), ConfigError);
  CHECK_THROWS_AS(flight_config_from_json(parse_toml(fixture::small_flight_toml(12000, "speed = 3\n"))), ConfigError);
  CHECK_THROWS_AS(flight_config_from_json(parse_toml("[payload]\nmean = 1.0\n")), ConfigError);
  CHECK_THROWS_AS(flight_config_from_json(parse_toml(fixture::small_flight_toml(12000, "n_layers_typo = 2\n"))), ConfigError);
  auto doc = parse_toml(fixture::small_flight_toml());
  doc["flight"]["aircraft"] = "concorde";
  CHECK_THROWS_AS(flight_config_from_json(doc), ConfigError);
  doc = parse_toml(fixture::small_flight_toml());
  doc["payload"]["sigma"] = "wide";
  CHECK_THROWS_AS(flight_config_from_json(doc), ConfigError);
  doc = parse_toml(fixture::small_flight_toml());
  doc["stochastic"]["criterion"] = "median";
  CHECK_THROWS_AS(flight_config_from_json(doc), ConfigError);
  try {
    flight_config_from_json(parse_toml(fixture::small_flight_toml(12000, "wiggle = 1\n")));
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("wiggle") != std::string::npos);
  }
}

TEST_CASE("payload section variants") {
  auto p = payload_from_json(nlohmann::json{{"mean", 20000.0}, {"per_passenger_sigma", 21.0}, {"n_passengers", 100.0}});
  CHECK(p.sigma_total == doctest::Approx(210.0));
  p = payload_from_json(nlohmann::json{{"mean", 20000.0}, {"fraction", 0.05}});
  CHECK(p.sigma_total == doctest::Approx(1000.0));
  CHECK(p.mode == PayloadMode::FractionOfMean);
  p = payload_from_json(nlohmann::json{{"mean", 20000.0}});
  CHECK(p.sigma_total == 0.0);
  CHECK_THROWS_AS(payload_from_json(nlohmann::json{{"mean", 1.0}, {"sigma", 1.0}, {"fraction", 0.1}}), ConfigError);
  CHECK_THROWS_AS(payload_from_json(nlohmann::json{{"mean", -1.0}}), ConfigError);
}

TEST_CASE("bundled config files load") {
  const std::filesystem::path dir = std::filesystem::path(ENSPLAN_SOURCE_DIR) / "configs";
  CHECK_NOTHROW(flight_config_from_json(load_toml(dir / "flight.toml"), dir));
  const auto e = experiment_from_json(load_toml(dir / "experiment.toml"), dir);
  CHECK(e.n_flights == 200);
  CHECK(e.seed == 7);
  CHECK_NOTHROW(predict_config_from_json(load_toml(dir / "predict.toml"), dir));
  CHECK_THROWS_AS(load_toml(dir / "missing.toml"), ConfigError);
}
