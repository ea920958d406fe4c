#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ensplan/harness.hpp"
#include "ensplan/performance.hpp"
#include "ensplan/router.hpp"
#include "ensplan/weather.hpp"

namespace ensplan::schedule {

struct Mission {
  std::string id;
  Airport origin;
  Airport destination;
  double departure_h = 0.0;     // after issuance
  double block_time_h = 0.0;    // occupies the aircraft over [departure, departure + block)
  double expected_occupancy = 0.8;
  double demand_kg = 0.0;       // payload at full occupancy
  double revenue = 0.0;         // currency, earned when the whole demand is carried
  std::vector<std::string> allowed_types;  // empty = any type in the fleet

  void validate() const;
};

struct FleetEntry {
  std::string type;
  AircraftModel model;
  std::size_t count = 0;
  double time_cost_per_min = 0.0;  // currency per block minute
};

struct Fleet {
  std::vector<FleetEntry> entries;  // enumeration order
  const FleetEntry& find(const std::string& type) const;
  void validate() const;
};

/// Type index (into Fleet::entries) per mission.
using Assignment = std::vector<std::size_t>;

/// Payload flown: expected occupancy times demand, capped at the type's
/// max payload. Revenue scales with the share of that demand carried.
double mission_payload(const Mission& m, const FleetEntry& type);
double mission_revenue(const Mission& m, const FleetEntry& type);

/// Whether `type` may fly `m` at all.
bool type_allowed(const Mission& m, const FleetEntry& type);

/// No type is ever used by more simultaneous missions than the fleet holds.
bool respects_fleet(const std::vector<Mission>& missions, const Fleet& fleet, const Assignment& a);

/// Odometer order: the last mission's type varies fastest, types in fleet
/// order. Stops after `cap` feasible assignments. Throws NoFeasibleSchedule.
std::vector<Assignment> enumerate_schedules(const std::vector<Mission>& missions, const Fleet& fleet,
                                            std::size_t cap = 64);

struct ScheduleProblem {
  std::vector<Mission> missions;
  Fleet fleet;
  double fuel_price = 0.8;  // currency per kg
  CostIndex ci{};
  LatticeConfig lattice{};
  harness::GridConfig grid{};
  SyntheticWeatherSpec weather{};
  std::uint64_t seed = 1;
  std::size_t cap = 64;
  std::size_t workers = 0;

  void validate() const;
};

/// Per-mission lattice and ensemble. Scenario j is member j of every
/// mission's ensemble.
struct MissionWeather {
  Lattice lattice;
  EnsembleForecast ensemble;
};

std::vector<MissionWeather> prepare_weather(const ScheduleProblem& p);

struct MissionCost {
  double fuel = 0.0;  // kg
  double time = 0.0;  // min
};

/// Optimal-plan fuel and time of every allowed (mission, type) under every
/// member. Indexed [mission][type][member]; disallowed types are empty.
using CostTable = std::vector<std::vector<std::vector<MissionCost>>>;

CostTable mission_costs(const ScheduleProblem& p, const std::vector<MissionWeather>& weather);

struct ScheduleEvaluation {
  Assignment assignment;
  std::vector<std::string> type_names;
  std::vector<double> revenue_per_scenario;
  std::vector<double> cost_per_scenario;
  std::vector<double> profit_per_scenario;
  double mean_profit = 0.0;
  double profit_spread_fraction = 0.0;  // (max - min) / mean
};

ScheduleEvaluation evaluate_schedule(const ScheduleProblem& p, const CostTable& costs, const Assignment& a);

struct ScheduleRanking {
  std::vector<ScheduleEvaluation> ranked;  // mean profit descending
  std::size_t n_scenarios = 0;
};

ScheduleRanking rank_schedules(const ScheduleProblem& p);

ScheduleProblem problem_from_json(const nlohmann::json& j);
ScheduleProblem load_problem(const std::filesystem::path& path);
nlohmann::json to_json(const ScheduleRanking& r, const ScheduleProblem& p);
std::string format_ranking(const ScheduleRanking& r, const ScheduleProblem& p);

}  // namespace ensplan::schedule
