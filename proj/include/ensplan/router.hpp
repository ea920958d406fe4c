#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ensplan/geo.hpp"
#include "ensplan/performance.hpp"
#include "ensplan/weather.hpp"

namespace ensplan {

struct Airport {
  std::string code;
  geo::GeoPoint pos;
};

struct LatticeConfig {
  std::size_t n_layers = 6;        // intermediate cross-sections
  std::size_t n_offsets = 5;       // lateral positions per layer, odd
  double max_offset_deg = 3.0;     // arc from the great circle to the outermost offset
  std::size_t lateral_reach = 1;   // max offset-index change per leg; 0 = unrestricted
  std::vector<std::size_t> levels{0, 1, 2};  // aircraft level indices available
};

struct Waypoint {
  std::string id;  // fixed width "Wkk-jj"
  geo::GeoPoint pos;
  std::size_t layer = 0;
  std::size_t offset = 0;
};

/// Layered corridor between two points. Layer 0 holds only the origin and
/// the last layer only the destination.
struct Lattice {
  std::vector<Waypoint> waypoints;
  std::vector<std::size_t> levels;
  std::vector<std::vector<std::size_t>> successors;
  std::vector<std::vector<std::size_t>> layers;
  std::size_t origin = 0;
  std::size_t destination = 0;
  double great_circle_m = 0.0;

  std::optional<std::size_t> find(const std::string& id) const;
  std::size_t n_paths() const;
};

Lattice build_lattice(geo::GeoPoint origin, geo::GeoPoint destination, const LatticeConfig& config);

/// Horizontal path, origin to destination. The key is the ids joined by '>'
/// and orders routes lexicographically by waypoint sequence.
struct Route {
  std::vector<std::string> waypoint_ids;
  std::string key;

  static Route from_ids(std::vector<std::string> ids);
  friend bool operator==(const Route& a, const Route& b) { return a.key == b.key; }
};

struct FlightPlan {
  Route route;
  std::vector<std::size_t> level_profile;  // aircraft level index per leg
  double trip_fuel = 0.0;     // kg
  double trip_time = 0.0;     // min
  double takeoff_mass = 0.0;  // kg
  double reserve = 0.0;       // kg
  double payload = 0.0;       // kg
  double cost = 0.0;          // kg-equivalent
  std::string scenario_tag;
};

struct RouterOptions {
  bool dominance_pruning = true;
  double mass_tolerance_kg = 0.1;
  int max_mass_iterations = 10;
};

/// Everything about a flight that does not change across weather/payload
/// scenarios.
struct PlanningContext {
  const Lattice& lattice;
  const AircraftModel& model;
  CostIndex ci{};
  double departure_h = 0.0;  // hours after issuance
  RouterOptions options{};
};

/// Geometry and sampled weather for one leg. Weather is read at the leg's
/// geographic midpoint, at the level's pressure, at the nominal time the
/// flight reaches the middle of the leg (layer fraction of the great-circle
/// distance at the mean lattice TAS). Path history never enters, which keeps
/// time/fuel dominance exact.
struct LegConditions {
  Leg leg;
  WindTemp wind;
  double time_h = 0.0;
};

LegConditions leg_conditions(const PlanningContext& ctx, const WeatherGrid& weather, std::size_t from_wp,
                             std::size_t to_wp, std::size_t level);

/// Fixed fuel/time charge for changing level; `from_level` empty means the
/// initial climb from the ground (level index + 1 steps).
struct LevelChange {
  double fuel = 0.0;
  double time = 0.0;
};
LevelChange level_change(const AircraftModel& model, std::optional<std::size_t> from_level,
                         std::size_t to_level);

struct ProfileCost {
  double fuel = 0.0;
  double time = 0.0;
  double cost = 0.0;
};

/// Direct evaluation of one path (waypoint indices) flown with one level
/// per leg, starting at `takeoff_mass`. Throws UnflyableLeg.
ProfileCost evaluate_profile(const PlanningContext& ctx, const WeatherGrid& weather,
                             std::span<const std::size_t> path, std::span<const std::size_t> levels,
                             double takeoff_mass);

/// Largest trip fuel satisfying both the tank and the takeoff-mass limit.
double trip_fuel_limit(const AircraftModel& model, double payload);

/// Minimum-cost plan over every path and level profile in the lattice.
/// Throws Infeasible.
FlightPlan optimize(const PlanningContext& ctx, const WeatherGrid& weather, double payload);

/// Same search with the horizontal path pinned to `route`; the vertical
/// profile stays free. Throws UnknownRoute, Infeasible.
FlightPlan recost_route(const PlanningContext& ctx, const Route& route, const WeatherGrid& weather,
                        double payload);

std::vector<std::size_t> route_indices(const Lattice& lattice, const Route& route);
std::vector<geo::GeoPoint> route_polyline(const Lattice& lattice, const Route& route);

nlohmann::json to_json(const FlightPlan& plan);
nlohmann::json lattice_to_json(const Lattice& lattice);

}  // namespace ensplan
