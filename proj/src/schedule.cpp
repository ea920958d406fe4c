#include "ensplan/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ensplan/config.hpp"
#include "ensplan/error.hpp"
#include "ensplan/parallel.hpp"
#include "ensplan/random.hpp"
#include "ensplan/stats.hpp"

namespace ensplan::schedule {

void Mission::validate() const {
  if (id.empty()) throw InvalidSpec("mission needs an id");
  if (!(expected_occupancy >= 0.0 && expected_occupancy <= 1.0))
    throw InvalidSpec("mission '" + id + "': occupancy must be in [0, 1]");
  if (!(revenue >= 0.0)) throw InvalidSpec("mission '" + id + "': revenue must be >= 0");
  if (!(demand_kg >= 0.0)) throw InvalidSpec("mission '" + id + "': demand must be >= 0");
  if (!(block_time_h > 0.0)) throw InvalidSpec("mission '" + id + "': block time must be > 0");
  if (!(departure_h >= 0.0)) throw InvalidSpec("mission '" + id + "': departure must be >= 0");
}

const FleetEntry& Fleet::find(const std::string& type) const {
  for (const auto& e : entries)
    if (e.type == type) return e;
  throw InvalidSpec("no aircraft type '" + type + "' in the fleet");
}

void Fleet::validate() const {
  if (entries.empty()) throw InvalidSpec("fleet is empty");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    entries[i].model.validate();
    if (!(entries[i].time_cost_per_min >= 0.0)) throw InvalidSpec("time cost must be >= 0");
    for (std::size_t k = 0; k < i; ++k)
      if (entries[k].type == entries[i].type) throw InvalidSpec("duplicate fleet type '" + entries[i].type + "'");
  }
}

void ScheduleProblem::validate() const {
  if (missions.empty()) throw InvalidSpec("schedule needs at least one mission");
  for (const auto& m : missions) m.validate();
  fleet.validate();
  for (const auto& m : missions)
    for (const auto& t : m.allowed_types) fleet.find(t);
  if (!(fuel_price >= 0.0)) throw InvalidSpec("fuel price must be >= 0");
  if (cap == 0) throw InvalidSpec("schedule cap must be >= 1");
  weather.validate();
}

double mission_payload(const Mission& m, const FleetEntry& type) {
  return std::min(m.expected_occupancy * m.demand_kg, type.model.max_payload);
}

double mission_revenue(const Mission& m, const FleetEntry& type) {
  const double wanted = m.expected_occupancy * m.demand_kg;
  if (wanted <= 0.0) return m.revenue;
  return m.revenue * mission_payload(m, type) / wanted;
}

bool type_allowed(const Mission& m, const FleetEntry& type) {
  if (type.count == 0) return false;
  return m.allowed_types.empty() ||
         std::find(m.allowed_types.begin(), m.allowed_types.end(), type.type) != m.allowed_types.end();
}

bool respects_fleet(const std::vector<Mission>& missions, const Fleet& fleet, const Assignment& a) {
  for (std::size_t t = 0; t < fleet.entries.size(); ++t) {
    // Sweep over interval endpoints; an arrival frees the aircraft before a
    // departure at the same instant.
    std::vector<std::pair<double, int>> events;
    for (std::size_t i = 0; i < missions.size(); ++i) {
      if (a[i] != t) continue;
      events.emplace_back(missions[i].departure_h, +1);
      events.emplace_back(missions[i].departure_h + missions[i].block_time_h, -1);
    }
    std::sort(events.begin(), events.end());
    long busy = 0;
    for (const auto& [time, delta] : events) {
      busy += delta;
      if (busy > static_cast<long>(fleet.entries[t].count)) return false;
    }
  }
  return true;
}

std::vector<Assignment> enumerate_schedules(const std::vector<Mission>& missions, const Fleet& fleet,
                                            std::size_t cap) {
  const std::size_t n = missions.size(), nt = fleet.entries.size();
  std::vector<std::vector<std::size_t>> options(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < nt; ++t)
      if (type_allowed(missions[i], fleet.entries[t])) options[i].push_back(t);
    if (options[i].empty()) throw NoFeasibleSchedule("no aircraft type in the fleet may fly mission '" + missions[i].id + "'");
  }
  std::vector<Assignment> out;
  if (n == 0) return out;
  std::vector<std::size_t> digit(n, 0);
  Assignment a(n);
  while (out.size() < cap) {
    for (std::size_t i = 0; i < n; ++i) a[i] = options[i][digit[i]];
    if (respects_fleet(missions, fleet, a)) out.push_back(a);
    bool wrapped = true;
    for (std::size_t i = n; i-- > 0;) {
      if (++digit[i] < options[i].size()) {
        wrapped = false;
        break;
      }
      digit[i] = 0;
    }
    if (wrapped) break;
  }
  if (out.empty()) throw NoFeasibleSchedule("no assignment of the fleet covers every mission without overlap");
  return out;
}

std::vector<MissionWeather> prepare_weather(const ScheduleProblem& p) {
  double min_tas = std::numeric_limits<double>::infinity();
  for (const auto& e : p.fleet.entries)
    for (auto l : p.lattice.levels) min_tas = std::min(min_tas, e.model.level(l).tas);
  std::vector<std::optional<MissionWeather>> slots(p.missions.size());
  parallel_for(
      p.missions.size(),
      [&](std::size_t i) {
        const auto& m = p.missions[i];
        Lattice lattice = build_lattice(m.origin.pos, m.destination.pos, p.lattice);
        const GridAxes axes = harness::domain_axes(p.grid, lattice, min_tas, m.departure_h);
        SyntheticWeatherSpec spec = p.weather;
        spec.seed = derive_seed(p.seed, {i});
        slots[i].emplace(MissionWeather{std::move(lattice), generate_ensemble(spec, axes).ensemble});
      },
      p.workers);
  std::vector<MissionWeather> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

CostTable mission_costs(const ScheduleProblem& p, const std::vector<MissionWeather>& weather) {
  const std::size_t n = p.missions.size(), nt = p.fleet.entries.size();
  const std::size_t nm = weather.empty() ? 0 : weather.front().ensemble.n_members();
  CostTable table(n, std::vector<std::vector<MissionCost>>(nt));
  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < nt; ++t)
      if (type_allowed(p.missions[i], p.fleet.entries[t])) {
        table[i][t].resize(nm);
        for (std::size_t j = 0; j < nm; ++j) jobs.emplace_back(i * nt + t, j);
      }
  parallel_for(
      jobs.size(),
      [&](std::size_t k) {
        const std::size_t i = jobs[k].first / nt, t = jobs[k].first % nt, j = jobs[k].second;
        const auto& m = p.missions[i];
        const auto& type = p.fleet.entries[t];
        const PlanningContext ctx{weather[i].lattice, type.model, p.ci, m.departure_h};
        const FlightPlan plan = optimize(ctx, weather[i].ensemble.members[j], mission_payload(m, type));
        table[i][t][j] = {plan.trip_fuel, plan.trip_time};
      },
      p.workers);
  return table;
}

ScheduleEvaluation evaluate_schedule(const ScheduleProblem& p, const CostTable& costs, const Assignment& a) {
  if (a.size() != p.missions.size()) throw DimensionMismatch("assignment does not cover every mission");
  ScheduleEvaluation e;
  e.assignment = a;
  std::size_t ns = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& cells = costs.at(i).at(a[i]);
    if (cells.empty()) throw InvalidSpec("type '" + p.fleet.entries[a[i]].type + "' may not fly mission '" + p.missions[i].id + "'");
    ns = cells.size();
    e.type_names.push_back(p.fleet.entries[a[i]].type);
  }
  e.revenue_per_scenario.assign(ns, 0.0);
  e.cost_per_scenario.assign(ns, 0.0);
  e.profit_per_scenario.assign(ns, 0.0);
  for (std::size_t j = 0; j < ns; ++j) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      const auto& type = p.fleet.entries[a[i]];
      const MissionCost& c = costs[i][a[i]][j];
      e.revenue_per_scenario[j] += mission_revenue(p.missions[i], type);
      e.cost_per_scenario[j] += p.fuel_price * c.fuel + type.time_cost_per_min * c.time;
    }
    e.profit_per_scenario[j] = e.revenue_per_scenario[j] - e.cost_per_scenario[j];
  }
  if (ns == 0) return e;
  e.mean_profit = stats::mean(e.profit_per_scenario);
  const auto [lo, hi] = std::minmax_element(e.profit_per_scenario.begin(), e.profit_per_scenario.end());
  e.profit_spread_fraction = e.mean_profit != 0.0 ? (*hi - *lo) / std::abs(e.mean_profit)
                                                  : std::numeric_limits<double>::quiet_NaN();
  return e;
}

ScheduleRanking rank_schedules(const ScheduleProblem& p) {
  p.validate();
  const auto assignments = enumerate_schedules(p.missions, p.fleet, p.cap);
  const auto weather = prepare_weather(p);
  const auto costs = mission_costs(p, weather);
  ScheduleRanking r;
  r.n_scenarios = p.weather.n_members;
  for (const auto& a : assignments) r.ranked.push_back(evaluate_schedule(p, costs, a));
  std::stable_sort(r.ranked.begin(), r.ranked.end(), [](const ScheduleEvaluation& x, const ScheduleEvaluation& y) {
    return x.mean_profit > y.mean_profit;
  });
  return r;
}

ScheduleProblem problem_from_json(const nlohmann::json& j) {
  try {
    ScheduleProblem p;
    for (const auto& f : j.at("fleet")) {
      FleetEntry e;
      e.type = f.at("type").get<std::string>();
      if (f.contains("aircraft_model")) e.model = aircraft_from_json(f.at("aircraft_model"));
      else e.model = bundled_aircraft(f.value("aircraft", e.type));
      e.count = f.at("count").get<std::size_t>();
      e.time_cost_per_min = f.value("time_cost_per_min", 0.0);
      p.fleet.entries.push_back(std::move(e));
    }
    for (const auto& mj : j.at("missions")) {
      Mission m;
      m.id = mj.at("id").get<std::string>();
      m.origin = airport_from_json(mj.at("origin"));
      m.destination = airport_from_json(mj.at("destination"));
      m.departure_h = mj.value("departure_h", 0.0);
      m.expected_occupancy = mj.value("expected_occupancy", 0.8);
      m.demand_kg = mj.value("demand_kg", 0.0);
      m.revenue = mj.value("revenue", 0.0);
      if (mj.contains("block_time_h")) {
        m.block_time_h = mj.at("block_time_h").get<double>();
      } else {
        // Great circle at 230 m/s plus an hour on the ground.
        m.block_time_h = geo::distance_m(m.origin.pos, m.destination.pos) / 230.0 / 3600.0 + 1.0;
      }
      if (mj.contains("allowed_types")) m.allowed_types = mj.at("allowed_types").get<std::vector<std::string>>();
      p.missions.push_back(std::move(m));
    }
    p.fuel_price = j.value("fuel_price", p.fuel_price);
    p.ci.ci = j.value("cost_index", 0.0);
    p.seed = j.value("seed", p.seed);
    p.cap = j.value("cap", p.cap);
    p.workers = j.value("workers", p.workers);
    if (j.contains("weather")) p.weather = weather_spec_from_json(j.at("weather"), p.weather);
    if (j.contains("lattice")) p.lattice = lattice_config_from_json(j.at("lattice"), p.lattice);
    if (j.contains("grid")) p.grid = grid_config_from_json(j.at("grid"), p.grid);
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("schedule document: ") + e.what());
  } catch (const InvalidSpec& e) {
    throw ConfigError(std::string("schedule document: ") + e.what());
  }
}

ScheduleProblem load_problem(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read " + path.string());
  try {
    return problem_from_json(nlohmann::json::parse(f));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

nlohmann::json to_json(const ScheduleRanking& r, const ScheduleProblem& p) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t k = 0; k < r.ranked.size(); ++k) {
    const auto& e = r.ranked[k];
    nlohmann::json assign = nlohmann::json::object();
    for (std::size_t i = 0; i < e.assignment.size(); ++i) assign[p.missions[i].id] = e.type_names[i];
    nlohmann::json spread = std::isfinite(e.profit_spread_fraction) ? nlohmann::json(e.profit_spread_fraction)
                                                                    : nlohmann::json(nullptr);
    out.push_back({{"rank", k + 1},
                   {"assignment", assign},
                   {"mean_profit", e.mean_profit},
                   {"profit_spread_fraction", spread},
                   {"profit_per_scenario", e.profit_per_scenario},
                   {"revenue_per_scenario", e.revenue_per_scenario},
                   {"cost_per_scenario", e.cost_per_scenario}});
  }
  return {{"n_scenarios", r.n_scenarios}, {"fuel_price", p.fuel_price}, {"schedules", out}};
}

std::string format_ranking(const ScheduleRanking& r, const ScheduleProblem& p) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-5s %14s %14s %14s %9s  %s\n", "rank", "mean profit", "min", "max", "spread",
                "assignment");
  os << buf;
  for (std::size_t k = 0; k < r.ranked.size(); ++k) {
    const auto& e = r.ranked[k];
    std::string assign;
    for (std::size_t i = 0; i < e.assignment.size(); ++i) {
      if (i) assign += ' ';
      assign += p.missions[i].id + "=" + e.type_names[i];
    }
    const auto [lo, hi] = std::minmax_element(e.profit_per_scenario.begin(), e.profit_per_scenario.end());
    std::snprintf(buf, sizeof buf, "%-5zu %14.1f %14.1f %14.1f %8.2f%%  %s\n", k + 1, e.mean_profit,
                  e.profit_per_scenario.empty() ? 0.0 : *lo, e.profit_per_scenario.empty() ? 0.0 : *hi,
                  100.0 * e.profit_spread_fraction, assign.c_str());
    os << buf;
  }
  return os.str();
}

}  // namespace ensplan::schedule
