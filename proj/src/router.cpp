#include "ensplan/router.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>

#include <nlohmann/json.hpp>

#include "ensplan/error.hpp"

namespace ensplan {

namespace {

std::string waypoint_id(std::size_t layer, std::size_t offset) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "W%02zu-%02zu", layer, offset);
  return buf;
}

double reference_tas(const PlanningContext& ctx) {
  double sum = 0.0;
  for (auto l : ctx.lattice.levels) sum += ctx.model.level(l).tas;
  return sum / static_cast<double>(ctx.lattice.levels.size());
}

struct Label {
  double time;
  double fuel;
  std::int32_t parent;  // arena index, -1 at the origin
  std::uint32_t wp;
  std::uint32_t level_pos;
};

struct Best {
  double fuel = 0.0;
  double time = 0.0;
  double cost = 0.0;
  std::vector<std::size_t> path;
  std::vector<std::size_t> levels;  // aircraft level ids
};

// Forward label-setting over (waypoint, level) states. Leg conditions are
// path-independent, so they are computed once per call and reused across the
// takeoff-mass iterations.
class LabelSearch {
 public:
  LabelSearch(const PlanningContext& ctx, const WeatherGrid& weather,
              std::optional<std::vector<std::size_t>> fixed_path)
      : ctx_(ctx), weather_(weather), fixed_(std::move(fixed_path)) {
    const auto& lat = ctx_.lattice;
    n_levels_ = lat.levels.size();
    if (n_levels_ == 0) throw InvalidSpec("lattice has no levels");
    for (auto l : lat.levels) ctx_.model.level(l);
    if (fixed_) {
      next_on_path_.assign(lat.waypoints.size(), kNone);
      for (std::size_t i = 0; i + 1 < fixed_->size(); ++i) next_on_path_[(*fixed_)[i]] = (*fixed_)[i + 1];
    }
    conditions_.resize(lat.waypoints.size());
    for (std::size_t w = 0; w < lat.waypoints.size(); ++w) {
      conditions_[w].resize(lat.successors[w].size() * n_levels_);
      for (std::size_t s = 0; s < lat.successors[w].size(); ++s) {
        const std::size_t to = lat.successors[w][s];
        if (fixed_ && next_on_path_[w] != to) continue;
        for (std::size_t li = 0; li < n_levels_; ++li) {
          conditions_[w][s * n_levels_ + li] = leg_conditions(ctx_, weather_, w, to, lat.levels[li]);
        }
      }
    }
  }

  std::optional<Best> run(double takeoff_mass, double trip_limit) {
    const auto& lat = ctx_.lattice;
    arena_.clear();
    states_.assign(lat.waypoints.size() * n_levels_, {});

    expand(-1, lat.origin, std::nullopt, 0.0, 0.0, takeoff_mass, trip_limit);
    for (std::size_t layer = 1; layer + 1 < lat.layers.size(); ++layer) {
      for (std::size_t w : lat.layers[layer]) {
        for (std::size_t li = 0; li < n_levels_; ++li) {
          // Copy: expand() may grow the arena.
          const auto ids = states_[w * n_levels_ + li];
          for (auto id : ids) {
            const Label l = arena_[id];
            expand(static_cast<std::int32_t>(id), w, li, l.time, l.fuel, takeoff_mass, trip_limit);
          }
        }
      }
    }
    return pick_best(lat.destination);
  }

 private:
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  void expand(std::int32_t parent, std::size_t w, std::optional<std::size_t> level_pos, double time,
              double fuel, double takeoff_mass, double trip_limit) {
    const auto& lat = ctx_.lattice;
    const auto& model = ctx_.model;
    for (std::size_t s = 0; s < lat.successors[w].size(); ++s) {
      const std::size_t to = lat.successors[w][s];
      if (fixed_ && next_on_path_[w] != to) continue;
      for (std::size_t li = 0; li < n_levels_; ++li) {
        const std::size_t level = lat.levels[li];
        const auto from_level =
            level_pos ? std::optional<std::size_t>(lat.levels[*level_pos]) : std::nullopt;
        const LevelChange lc = level_change(model, from_level, level);
        double f = fuel + lc.fuel;
        double t = time + lc.time;
        const auto& cond = conditions_[w][s * n_levels_ + li];
        LegResult r;
        try {
          r = integrate_leg(model, level, cond.leg, cond.wind, takeoff_mass - f);
        } catch (const UnflyableLeg&) {
          continue;
        } catch (const BadMass&) {
          continue;
        }
        f += r.fuel;
        t += r.time;
        if (f > trip_limit) continue;
        insert(Label{t, f, parent, static_cast<std::uint32_t>(to), static_cast<std::uint32_t>(li)});
      }
    }
  }

  // A strictly dominated label can only finish with a strictly higher cost:
  // time adds, and total fuel is strictly increasing in fuel already burnt
  // (a heavier aircraft burns more, but never a full kilogram per kilogram).
  bool dominates(const Label& a, const Label& b) const {
    if (a.time > b.time || a.fuel > b.fuel) return false;
    return a.fuel < b.fuel || (ctx_.ci.ci > 0.0 && a.time < b.time);
  }

  void insert(const Label& label) {
    auto& ids = states_[label.wp * n_levels_ + label.level_pos];
    if (ctx_.options.dominance_pruning) {
      for (auto id : ids)
        if (dominates(arena_[id], label)) return;
      std::erase_if(ids, [&](std::uint32_t id) { return dominates(label, arena_[id]); });
    }
    ids.push_back(static_cast<std::uint32_t>(arena_.size()));
    arena_.push_back(label);
  }

  void reconstruct(std::uint32_t id, std::vector<std::size_t>& path, std::vector<std::size_t>& levels) const {
    path.clear();
    levels.clear();
    std::int32_t cur = static_cast<std::int32_t>(id);
    while (cur >= 0) {
      const Label& l = arena_[static_cast<std::size_t>(cur)];
      path.push_back(l.wp);
      levels.push_back(ctx_.lattice.levels[l.level_pos]);
      cur = l.parent;
    }
    path.push_back(ctx_.lattice.origin);
    std::reverse(path.begin(), path.end());
    std::reverse(levels.begin(), levels.end());
  }

  std::optional<Best> pick_best(std::size_t dest) const {
    std::optional<Best> best;
    std::vector<std::size_t> path, levels;
    for (std::size_t li = 0; li < n_levels_; ++li) {
      for (auto id : states_[dest * n_levels_ + li]) {
        const Label& l = arena_[id];
        const double cost = flight_cost(l.fuel, l.time, ctx_.ci);
        if (best && cost > best->cost) continue;
        reconstruct(id, path, levels);
        // Ties: smallest route key, then lowest level profile. Waypoint
        // indices follow id order, so comparing indices compares keys.
        if (best && cost == best->cost &&
            std::tie(best->path, best->levels) <= std::tie(path, levels))
          continue;
        best = Best{l.fuel, l.time, cost, path, levels};
      }
    }
    return best;
  }

  const PlanningContext& ctx_;
  const WeatherGrid& weather_;
  std::optional<std::vector<std::size_t>> fixed_;
  std::vector<std::size_t> next_on_path_;
  std::size_t n_levels_ = 0;
  std::vector<std::vector<LegConditions>> conditions_;
  std::vector<Label> arena_;
  std::vector<std::vector<std::uint32_t>> states_;
};

std::string binding_limit(const AircraftModel& m, double payload) {
  const double final_reserve = m.reserve.final_reserve_min / 60.0 * m.holding_fuel_flow;
  const double by_tank = m.max_fuel - final_reserve;
  const double by_mass = m.max_takeoff_mass - m.oew - payload - final_reserve;
  return by_mass < by_tank ? "max_takeoff_mass" : "max_fuel";
}

FlightPlan solve(const PlanningContext& ctx, const WeatherGrid& weather, double payload,
                 std::optional<std::vector<std::size_t>> fixed_path) {
  const auto& m = ctx.model;
  if (!(payload >= 0.0)) throw Infeasible("payload must be non-negative");
  if (payload > m.max_payload) {
    throw Infeasible("payload " + std::to_string(payload) + " kg exceeds max_payload " +
                     std::to_string(m.max_payload) + " kg of '" + m.name + "'");
  }
  const double limit = trip_fuel_limit(m, payload);
  if (!(limit > 0.0)) {
    throw Infeasible("no fuel available for the trip within " + binding_limit(m, payload) +
                     " at payload " + std::to_string(payload) + " kg");
  }
  LabelSearch search(ctx, weather, std::move(fixed_path));
  // Fixed point trip = F(trip) on the takeoff mass. Secant steps on
  // g(x) = F(x) - x, with the plain step as fallback; the stopping test is
  // the plain residual either way.
  double trip = 0.0;
  bool have_prev = false;
  double prev_x = 0.0, prev_g = 0.0;
  for (int it = 0; it < ctx.options.max_mass_iterations; ++it) {
    const double tom = m.oew + payload + trip + reserve_fuel(m, trip);
    auto best = search.run(tom, limit);
    if (!best && trip < limit) {
      // A light guess can make long legs burn below empty weight; retry from
      // the heaviest admissible takeoff mass before giving up.
      trip = limit;
      have_prev = false;
      continue;
    }
    if (!best) {
      throw Infeasible("no flyable path within " + binding_limit(m, payload) + " (trip fuel limit " +
                       std::to_string(limit) + " kg)");
    }
    if (std::abs(best->fuel - trip) < ctx.options.mass_tolerance_kg) {
      FlightPlan plan;
      std::vector<std::string> ids;
      ids.reserve(best->path.size());
      for (auto w : best->path) ids.push_back(ctx.lattice.waypoints[w].id);
      plan.route = Route::from_ids(std::move(ids));
      plan.level_profile = std::move(best->levels);
      plan.trip_fuel = best->fuel;
      plan.trip_time = best->time;
      plan.reserve = reserve_fuel(m, best->fuel);
      plan.payload = payload;
      plan.takeoff_mass = m.oew + payload + plan.trip_fuel + plan.reserve;
      plan.cost = best->cost;
      if (plan.takeoff_mass > m.max_takeoff_mass || plan.trip_fuel + plan.reserve > m.max_fuel)
        throw Infeasible("plan violates " + binding_limit(m, payload));
      return plan;
    }
    const double g = best->fuel - trip;
    double next = best->fuel;
    if (have_prev && g != prev_g) {
      const double x = trip - g * (trip - prev_x) / (g - prev_g);
      if (x > 0.0 && x <= limit) next = x;
    }
    have_prev = true;
    prev_x = trip;
    prev_g = g;
    trip = next;
  }
  throw Infeasible("takeoff mass did not converge within " +
                   std::to_string(ctx.options.max_mass_iterations) + " iterations");
}

}  // namespace

std::optional<std::size_t> Lattice::find(const std::string& id) const {
  for (std::size_t i = 0; i < waypoints.size(); ++i)
    if (waypoints[i].id == id) return i;
  return std::nullopt;
}

std::size_t Lattice::n_paths() const {
  std::vector<std::size_t> count(waypoints.size(), 0);
  count[origin] = 1;
  for (const auto& layer : layers)
    for (auto w : layer)
      for (auto s : successors[w]) count[s] += count[w];
  return count[destination];
}

Lattice build_lattice(geo::GeoPoint origin, geo::GeoPoint destination, const LatticeConfig& cfg) {
  const double angle = geo::central_angle(origin, destination);
  if (angle < 1e-9) throw DegenerateGeometry("origin and destination coincide");
  if (angle > geo::kPi - 1e-6) throw DegenerateGeometry("origin and destination are antipodal");
  if (cfg.n_layers < 1 || cfg.n_layers > 97) throw InvalidSpec("n_layers must be in [1, 97]");
  if (cfg.n_offsets < 1 || cfg.n_offsets % 2 == 0 || cfg.n_offsets > 99)
    throw InvalidSpec("n_offsets must be odd and in [1, 99]");
  if (cfg.levels.empty()) throw InvalidSpec("lattice needs at least one level");
  if (!(cfg.max_offset_deg >= 0.0)) throw InvalidSpec("max_offset_deg must be non-negative");

  Lattice lat;
  lat.levels = cfg.levels;
  lat.great_circle_m = geo::distance_m(origin, destination);
  const std::size_t center = (cfg.n_offsets - 1) / 2;
  const std::size_t n_total = cfg.n_layers + 2;

  lat.layers.resize(n_total);
  auto add = [&](std::size_t layer, std::size_t offset, geo::GeoPoint p) {
    lat.layers[layer].push_back(lat.waypoints.size());
    lat.waypoints.push_back({waypoint_id(layer, offset), p, layer, offset});
  };
  add(0, center, origin);
  for (std::size_t k = 1; k <= cfg.n_layers; ++k) {
    const double f = static_cast<double>(k) / static_cast<double>(n_total - 1);
    const geo::GeoPoint p = geo::intermediate(origin, destination, f);
    const double course = geo::initial_course_deg(p, destination);
    for (std::size_t j = 0; j < cfg.n_offsets; ++j) {
      const double s = center == 0 ? 0.0
                                   : (static_cast<double>(j) - static_cast<double>(center)) /
                                         static_cast<double>(center) * cfg.max_offset_deg;
      add(k, j, s == 0.0 ? p : geo::destination(p, course + 90.0, s));
    }
  }
  add(n_total - 1, center, destination);
  lat.origin = lat.layers.front().front();
  lat.destination = lat.layers.back().front();

  lat.successors.resize(lat.waypoints.size());
  for (std::size_t k = 0; k + 1 < n_total; ++k) {
    for (auto a : lat.layers[k]) {
      for (auto b : lat.layers[k + 1]) {
        const bool endpoint = k == 0 || k + 1 == n_total - 1;
        const auto da = static_cast<long>(lat.waypoints[a].offset);
        const auto db = static_cast<long>(lat.waypoints[b].offset);
        if (endpoint || cfg.lateral_reach == 0 || std::labs(da - db) <= static_cast<long>(cfg.lateral_reach))
          lat.successors[a].push_back(b);
      }
    }
  }
  return lat;
}

Route Route::from_ids(std::vector<std::string> ids) {
  Route r;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) r.key += '>';
    r.key += ids[i];
  }
  r.waypoint_ids = std::move(ids);
  return r;
}

LegConditions leg_conditions(const PlanningContext& ctx, const WeatherGrid& weather, std::size_t from_wp,
                             std::size_t to_wp, std::size_t level) {
  const auto& lat = ctx.lattice;
  const auto& a = lat.waypoints[from_wp];
  const auto& b = lat.waypoints[to_wp];
  const geo::GeoPoint mid = geo::intermediate(a.pos, b.pos, 0.5);
  const double last = static_cast<double>(lat.layers.size() - 1);
  const double frac = 0.5 * (static_cast<double>(a.layer) + static_cast<double>(b.layer)) / last;
  const double t_h = ctx.departure_h + frac * lat.great_circle_m / reference_tas(ctx) / 3600.0;
  LegConditions c;
  c.leg = {geo::distance_m(a.pos, b.pos), geo::initial_course_deg(mid, b.pos)};
  c.wind = sample_at(weather, mid.lat, mid.lon, ctx.model.level(level).pressure_hpa, t_h);
  c.time_h = t_h;
  return c;
}

LevelChange level_change(const AircraftModel& model, std::optional<std::size_t> from_level,
                         std::size_t to_level) {
  const double steps = from_level ? std::abs(static_cast<double>(to_level) - static_cast<double>(*from_level))
                                  : static_cast<double>(to_level + 1);
  return {steps * model.climb_fuel_per_level_step, steps * model.climb_time_per_level_step};
}

ProfileCost evaluate_profile(const PlanningContext& ctx, const WeatherGrid& weather,
                             std::span<const std::size_t> path, std::span<const std::size_t> levels,
                             double takeoff_mass) {
  if (path.size() < 2 || levels.size() + 1 != path.size())
    throw InvalidSpec("profile needs one level per leg");
  double fuel = 0.0, time = 0.0;
  std::optional<std::size_t> prev;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const LevelChange lc = level_change(ctx.model, prev, levels[i]);
    fuel += lc.fuel;
    time += lc.time;
    const auto c = leg_conditions(ctx, weather, path[i], path[i + 1], levels[i]);
    const LegResult r = integrate_leg(ctx.model, levels[i], c.leg, c.wind, takeoff_mass - fuel);
    fuel += r.fuel;
    time += r.time;
    prev = levels[i];
  }
  return {fuel, time, flight_cost(fuel, time, ctx.ci)};
}

double trip_fuel_limit(const AircraftModel& m, double payload) {
  const double final_reserve = m.reserve.final_reserve_min / 60.0 * m.holding_fuel_flow;
  const double k = 1.0 + m.reserve.contingency_fraction;
  const double by_tank = (m.max_fuel - final_reserve) / k;
  const double by_mass = (m.max_takeoff_mass - m.oew - payload - final_reserve) / k;
  return std::min(by_tank, by_mass);
}

FlightPlan optimize(const PlanningContext& ctx, const WeatherGrid& weather, double payload) {
  return solve(ctx, weather, payload, std::nullopt);
}

FlightPlan recost_route(const PlanningContext& ctx, const Route& route, const WeatherGrid& weather,
                        double payload) {
  return solve(ctx, weather, payload, route_indices(ctx.lattice, route));
}

std::vector<std::size_t> route_indices(const Lattice& lattice, const Route& route) {
  if (route.waypoint_ids.size() != lattice.layers.size())
    throw UnknownRoute("route '" + route.key + "' has the wrong number of waypoints");
  std::vector<std::size_t> idx;
  for (const auto& id : route.waypoint_ids) {
    auto w = lattice.find(id);
    if (!w) throw UnknownRoute("waypoint '" + id + "' not in lattice");
    idx.push_back(*w);
  }
  if (idx.front() != lattice.origin || idx.back() != lattice.destination)
    throw UnknownRoute("route '" + route.key + "' does not join origin to destination");
  for (std::size_t i = 0; i + 1 < idx.size(); ++i) {
    const auto& s = lattice.successors[idx[i]];
    if (std::find(s.begin(), s.end(), idx[i + 1]) == s.end())
      throw UnknownRoute("route '" + route.key + "' uses a missing edge");
  }
  return idx;
}

std::vector<geo::GeoPoint> route_polyline(const Lattice& lattice, const Route& route) {
  std::vector<geo::GeoPoint> out;
  for (auto i : route_indices(lattice, route)) out.push_back(lattice.waypoints[i].pos);
  return out;
}

nlohmann::json to_json(const FlightPlan& p) {
  nlohmann::ordered_json j;
  j["route"] = p.route.waypoint_ids;
  j["route_key"] = p.route.key;
  j["level_profile"] = p.level_profile;
  j["trip_fuel_kg"] = p.trip_fuel;
  j["trip_time_min"] = p.trip_time;
  j["takeoff_mass_kg"] = p.takeoff_mass;
  j["reserve_kg"] = p.reserve;
  j["payload_kg"] = p.payload;
  j["cost"] = p.cost;
  j["scenario_tag"] = p.scenario_tag;
  return j;
}

nlohmann::json lattice_to_json(const Lattice& lattice) {
  nlohmann::ordered_json j;
  j["levels"] = lattice.levels;
  j["great_circle_km"] = lattice.great_circle_m / 1000.0;
  j["waypoints"] = nlohmann::ordered_json::array();
  for (const auto& w : lattice.waypoints)
    j["waypoints"].push_back({{"id", w.id}, {"lat", w.pos.lat}, {"lon", w.pos.lon}, {"layer", w.layer}});
  return j;
}

}  // namespace ensplan
