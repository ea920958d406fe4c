#include "ensplan/performance.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ensplan/error.hpp"

namespace ensplan {

namespace {

// Kept in sync with data/aircraft/*.json (a unit test compares them).
constexpr const char* kNarrowbody = R"({
  "name": "narrowbody",
  "oew": 42600,
  "max_fuel": 18700,
  "max_payload": 19000,
  "max_takeoff_mass": 78000,
  "levels": [
    {"pressure_hpa": 300, "tas": 228, "fuel_flow_base": 1800, "fuel_flow_mass_coeff": 0.020},
    {"pressure_hpa": 250, "tas": 230, "fuel_flow_base": 1700, "fuel_flow_mass_coeff": 0.024},
    {"pressure_hpa": 200, "tas": 229, "fuel_flow_base": 1620, "fuel_flow_mass_coeff": 0.030}
  ],
  "climb_fuel_per_level_step": 120,
  "climb_time_per_level_step": 2.0,
  "holding_fuel_flow": 2100,
  "reserve": {"contingency_fraction": 0.05, "final_reserve_min": 45}
})";

constexpr const char* kWidebody = R"({
  "name": "widebody",
  "oew": 128000,
  "max_fuel": 101000,
  "max_payload": 53000,
  "max_takeoff_mass": 254000,
  "levels": [
    {"pressure_hpa": 300, "tas": 248, "fuel_flow_base": 4300, "fuel_flow_mass_coeff": 0.022},
    {"pressure_hpa": 250, "tas": 250, "fuel_flow_base": 4000, "fuel_flow_mass_coeff": 0.026},
    {"pressure_hpa": 200, "tas": 249, "fuel_flow_base": 3750, "fuel_flow_mass_coeff": 0.030}
  ],
  "climb_fuel_per_level_step": 350,
  "climb_time_per_level_step": 2.5,
  "holding_fuel_flow": 5200,
  "reserve": {"contingency_fraction": 0.05, "final_reserve_min": 45}
})";

}  // namespace

void AircraftModel::validate() const {
  if (!(oew > 0) || !(max_fuel > 0) || !(max_payload > 0) || !(max_takeoff_mass > 0))
    throw InvalidSpec("aircraft '" + name + "': masses must be positive");
  if (levels.empty()) throw InvalidSpec("aircraft '" + name + "': no cruise levels");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const auto& l = levels[i];
    if (!(l.tas > 0) || !(l.fuel_flow_base > 0) || !(l.pressure_hpa > 0))
      throw InvalidSpec("aircraft '" + name + "': level " + std::to_string(i) + " has non-positive entries");
    // Carrying mass must cost fuel at every level.
    if (!(l.fuel_flow_mass_coeff > 0))
      throw InvalidSpec("aircraft '" + name + "': fuel_flow_mass_coeff must be > 0 at level " +
                        std::to_string(i));
  }
  if (climb_fuel_per_level_step < 0 || climb_time_per_level_step < 0 || holding_fuel_flow < 0)
    throw InvalidSpec("aircraft '" + name + "': negative climb or holding parameters");
  if (reserve.contingency_fraction < 0 || reserve.final_reserve_min < 0)
    throw InvalidSpec("aircraft '" + name + "': negative reserve parameters");
}

const CruiseLevel& AircraftModel::level(std::size_t i) const {
  if (i >= levels.size())
    throw BadLevel("aircraft '" + name + "' has no level " + std::to_string(i));
  return levels[i];
}

double fuel_flow(const AircraftModel& model, double mass, std::size_t level) {
  const auto& l = model.level(level);
  if (!(mass >= model.oew) || mass > model.max_takeoff_mass)
    throw BadMass("mass " + std::to_string(mass) + " kg outside [oew, max_takeoff_mass]");
  return l.fuel_flow_base + l.fuel_flow_mass_coeff * (mass - model.oew);
}

double along_track_wind(const WindTemp& wind, double course_deg) {
  const double c = geo::deg2rad(course_deg);
  return wind.u * std::sin(c) + wind.v * std::cos(c);
}

LegResult integrate_leg(const AircraftModel& model, std::size_t level, const Leg& leg,
                        const WindTemp& wind, double start_mass) {
  const auto& l = model.level(level);
  if (!(start_mass >= model.oew))
    throw BadMass("start mass " + std::to_string(start_mass) + " kg below oew");
  const double gs = l.tas + along_track_wind(wind, leg.course_deg);
  if (!(gs > 0.0))
    throw UnflyableLeg("ground speed " + std::to_string(gs) + " m/s on a " +
                       std::to_string(leg.length_m / 1000.0) + " km leg");
  const double hours = leg.length_m / gs / 3600.0;
  // F = (b + c (m0 - F/2 - oew)) t  solved for F.
  const double fuel = (l.fuel_flow_base + l.fuel_flow_mass_coeff * (start_mass - model.oew)) * hours /
                      (1.0 + 0.5 * l.fuel_flow_mass_coeff * hours);
  if (start_mass - fuel < model.oew) throw BadMass("leg burns below operating empty weight");
  return {hours * 60.0, fuel, gs, start_mass, start_mass - fuel};
}

double flight_cost(double fuel_kg, double time_min, CostIndex ci) { return fuel_kg + ci.ci * time_min; }

double reserve_fuel(const AircraftModel& model, double trip_fuel) {
  return model.reserve.contingency_fraction * trip_fuel +
         model.reserve.final_reserve_min / 60.0 * model.holding_fuel_flow;
}

AircraftModel aircraft_from_json(const nlohmann::json& j) {
  try {
    AircraftModel m;
    m.name = j.at("name").get<std::string>();
    m.oew = j.at("oew").get<double>();
    m.max_fuel = j.at("max_fuel").get<double>();
    m.max_payload = j.at("max_payload").get<double>();
    m.max_takeoff_mass = j.at("max_takeoff_mass").get<double>();
    for (const auto& l : j.at("levels")) {
      m.levels.push_back({l.at("pressure_hpa").get<double>(), l.at("tas").get<double>(),
                          l.at("fuel_flow_base").get<double>(), l.at("fuel_flow_mass_coeff").get<double>()});
    }
    m.climb_fuel_per_level_step = j.at("climb_fuel_per_level_step").get<double>();
    m.climb_time_per_level_step = j.at("climb_time_per_level_step").get<double>();
    m.holding_fuel_flow = j.at("holding_fuel_flow").get<double>();
    if (j.contains("reserve")) {
      const auto& r = j.at("reserve");
      m.reserve.contingency_fraction = r.value("contingency_fraction", m.reserve.contingency_fraction);
      m.reserve.final_reserve_min = r.value("final_reserve_min", m.reserve.final_reserve_min);
    }
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("aircraft model: ") + e.what());
  } catch (const InvalidSpec& e) {
    throw ConfigError(e.what());
  }
}

nlohmann::json aircraft_to_json(const AircraftModel& m) {
  nlohmann::ordered_json j;
  j["name"] = m.name;
  j["oew"] = m.oew;
  j["max_fuel"] = m.max_fuel;
  j["max_payload"] = m.max_payload;
  j["max_takeoff_mass"] = m.max_takeoff_mass;
  j["levels"] = nlohmann::ordered_json::array();
  for (const auto& l : m.levels) {
    j["levels"].push_back({{"pressure_hpa", l.pressure_hpa},
                           {"tas", l.tas},
                           {"fuel_flow_base", l.fuel_flow_base},
                           {"fuel_flow_mass_coeff", l.fuel_flow_mass_coeff}});
  }
  j["climb_fuel_per_level_step"] = m.climb_fuel_per_level_step;
  j["climb_time_per_level_step"] = m.climb_time_per_level_step;
  j["holding_fuel_flow"] = m.holding_fuel_flow;
  j["reserve"] = {{"contingency_fraction", m.reserve.contingency_fraction},
                  {"final_reserve_min", m.reserve.final_reserve_min}};
  return j;
}

AircraftModel load_aircraft(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open aircraft file " + path.string());
  try {
    return aircraft_from_json(nlohmann::json::parse(f));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

AircraftModel bundled_aircraft(const std::string& name) {
  if (name == "narrowbody") return aircraft_from_json(nlohmann::json::parse(kNarrowbody));
  if (name == "widebody") return aircraft_from_json(nlohmann::json::parse(kWidebody));
  throw ConfigError("unknown bundled aircraft '" + name + "' (known: narrowbody, widebody)");
}

std::vector<std::string> bundled_aircraft_names() { return {"narrowbody", "widebody"}; }

}  // namespace ensplan
