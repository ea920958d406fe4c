#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ensplan/weather.hpp"

namespace ensplan {

/// One cruise level of the performance table.
struct CruiseLevel {
  double pressure_hpa = 0.0;
  double tas = 0.0;                    // m/s
  double fuel_flow_base = 0.0;         // kg/h at operating empty weight
  double fuel_flow_mass_coeff = 0.0;   // kg/h per kg above OEW
};

/// Contingency is a fraction of trip fuel; final reserve is a holding time.
struct ReservePolicy {
  double contingency_fraction = 0.05;
  double final_reserve_min = 45.0;
};

struct AircraftModel {
  std::string name;
  double oew = 0.0;               // kg
  double max_fuel = 0.0;          // kg
  double max_payload = 0.0;       // kg
  double max_takeoff_mass = 0.0;  // kg
  std::vector<CruiseLevel> levels;  // index = level id; ordered low to high
  double climb_fuel_per_level_step = 0.0;  // kg
  double climb_time_per_level_step = 0.0;  // min
  double holding_fuel_flow = 0.0;          // kg/h
  ReservePolicy reserve;

  /// Throws InvalidSpec.
  void validate() const;
  const CruiseLevel& level(std::size_t i) const;
};

/// Weight of flight time in fuel-equivalent cost, kg per minute.
struct CostIndex {
  double ci = 0.0;
};

struct LegResult {
  double time = 0.0;          // min
  double fuel = 0.0;          // kg
  double ground_speed = 0.0;  // m/s
  double start_mass = 0.0;    // kg
  double end_mass = 0.0;      // kg
};

/// Great-circle leg as seen by the performance model.
struct Leg {
  double length_m = 0.0;
  double course_deg = 0.0;
};

/// base(level) + coeff(level) * (mass - oew). Accepts mass in [oew, mtow].
double fuel_flow(const AircraftModel& model, double mass, std::size_t level);

/// Along-track wind component for a course (positive = tailwind).
double along_track_wind(const WindTemp& wind, double course_deg);

/// Flies one leg at constant TAS with the wind projected on the course.
/// Fuel is the flow at the leg's mean mass times the leg time, solved in
/// closed form for the affine flow model.
LegResult integrate_leg(const AircraftModel& model, std::size_t level, const Leg& leg,
                        const WindTemp& wind, double start_mass);

/// fuel + ci * time, kg-equivalent.
double flight_cost(double fuel_kg, double time_min, CostIndex ci);

/// Contingency plus final reserve, kg.
double reserve_fuel(const AircraftModel& model, double trip_fuel);

AircraftModel aircraft_from_json(const nlohmann::json& j);
nlohmann::json aircraft_to_json(const AircraftModel& model);
AircraftModel load_aircraft(const std::filesystem::path& path);

/// Bundled models: "narrowbody" and "widebody". Throws ConfigError otherwise.
AircraftModel bundled_aircraft(const std::string& name);
std::vector<std::string> bundled_aircraft_names();

}  // namespace ensplan
