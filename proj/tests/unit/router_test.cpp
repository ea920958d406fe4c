#include <doctest.h>

#include <cmath>
#include <random>

#include "ensplan/error.hpp"
#include "ensplan/geo.hpp"
#include "ensplan/router.hpp"
#include "oracles.hpp"

using namespace ensplan;

namespace {

const geo::GeoPoint kA{50.0, -20.0};
const geo::GeoPoint kB{50.0, -5.0};

LatticeConfig cfg(std::size_t layers, std::size_t offsets, std::size_t reach, std::vector<std::size_t> levels = {0, 1, 2}) {
  LatticeConfig c;
  c.n_layers = layers;
  c.n_offsets = offsets;
  c.lateral_reach = reach;
  c.max_offset_deg = 1.5;
  c.levels = std::move(levels);
  return c;
}

}  // namespace

TEST_CASE("lattice path counts") {
  CHECK(build_lattice(kA, kB, cfg(4, 1, 1)).n_paths() == 1);
  const auto full = build_lattice(kA, kB, cfg(2, 3, 0));
  CHECK(full.n_paths() == 9);
  CHECK(oracle::all_paths(full).size() == 9);
  // With reach 1 the outer offsets cannot jump across: 3 + 2 + 2 routes.
  CHECK(build_lattice(kA, kB, cfg(2, 3, 1)).n_paths() == 7);
  const auto lat = build_lattice(kA, kB, cfg(3, 5, 1));
  CHECK(lat.n_paths() == oracle::all_paths(lat).size());
  CHECK(lat.waypoints[lat.origin].id == "W00-02");  // origin sits on the centre offset
  CHECK(lat.waypoints[lat.destination].pos.lat == doctest::Approx(kB.lat));
}

TEST_CASE("single-path lattice: optimum equals enumeration over level profiles") {
  const auto lat = build_lattice(kA, kB, cfg(1, 1, 1));
  const auto model = oracle::toy_aircraft();
  const auto grid = oracle::constant_grid(15, 5, 45, 55, -25, 0);
  PlanningContext ctx{lat, model, {10}, 0.0, {}};
  ctx.options.mass_tolerance_kg = 1e-7;
  ctx.options.max_mass_iterations = 60;
  const auto plan = optimize(ctx, grid, 10000);
  CHECK(plan.level_profile.size() == 2);
  const auto best = oracle::exhaustive(ctx, grid, plan.takeoff_mass, trip_fuel_limit(model, 10000));
  REQUIRE(best);
  CHECK(std::abs(best->cost - plan.cost) < 1e-6);
  CHECK(best->levels == plan.level_profile);
  CHECK(plan.takeoff_mass == doctest::Approx(model.oew + 10000 + plan.trip_fuel + plan.reserve));
}

TEST_CASE("calm air picks the great-circle route") {
  const auto lat = build_lattice(kA, kB, cfg(3, 5, 1));
  const auto model = bundled_aircraft("narrowbody");
  const auto grid = oracle::constant_grid(0, 0, 45, 55, -25, 0);
  PlanningContext ctx{lat, model, {0}, 0.0, {}};
  const auto plan = optimize(ctx, grid, 12000);
  CHECK(plan.route.key == "W00-02>W01-02>W02-02>W03-02>W04-02");
}

TEST_CASE("level change charges") {
  const auto m = oracle::toy_aircraft();
  CHECK(level_change(m, std::nullopt, 0).fuel == 100);
  CHECK(level_change(m, std::nullopt, 2).fuel == 300);
  CHECK(level_change(m, std::nullopt, 2).time == 6.0);
  CHECK(level_change(m, 2, 0).fuel == 200);
  CHECK(level_change(m, 1, 1).fuel == 0);
}

TEST_CASE("evaluate_profile agrees with the oracle flight") {
  std::mt19937_64 rng(4);
  const auto lat = build_lattice(kA, kB, cfg(3, 3, 1));
  const auto model = oracle::toy_aircraft();
  const auto grid = oracle::random_grid(rng, 30, 44, 56, -26, 1);
  PlanningContext ctx{lat, model, {25}, 3.0, {}};
  const auto paths = oracle::all_paths(lat);
  std::uniform_int_distribution<std::size_t> lv(0, 2);
  for (int k = 0; k < 50; ++k) {
    const auto& p = paths[rng() % paths.size()];
    std::vector<std::size_t> levels(p.size() - 1);
    for (auto& l : levels) l = lv(rng);
    const auto c = oracle::fly(ctx, grid, p, levels, 70000);
    REQUIRE(c);
    const auto r = evaluate_profile(ctx, grid, p, levels, 70000);
    CHECK(r.fuel == doctest::Approx(c->fuel).epsilon(1e-12));
    CHECK(r.time == doctest::Approx(c->time).epsilon(1e-12));
    CHECK(r.cost == doctest::Approx(c->cost).epsilon(1e-12));
  }
}

TEST_CASE("recost_route reproduces optimize on the optimal route") {
  std::mt19937_64 rng(8);
  const auto lat = build_lattice(kA, kB, cfg(3, 5, 1));
  const auto model = bundled_aircraft("narrowbody");
  const auto grid = oracle::random_grid(rng, 25, 44, 56, -26, 1);
  PlanningContext ctx{lat, model, {15}, 0.0, {}};
  const auto plan = optimize(ctx, grid, 15000);
  const auto again = recost_route(ctx, plan.route, grid, 15000);
  CHECK(again.route == plan.route);
  CHECK(again.cost == doctest::Approx(plan.cost).epsilon(1e-9));
  CHECK(again.level_profile == plan.level_profile);
  // Any other route costs at least as much.
  for (const auto& p : oracle::all_paths(lat)) {
    std::vector<std::string> ids;
    for (auto w : p) ids.push_back(lat.waypoints[w].id);
    const auto r = recost_route(ctx, Route::from_ids(ids), grid, 15000);
    CHECK(r.cost >= plan.cost - 0.2);
  }
  CHECK_THROWS_AS(recost_route(ctx, Route::from_ids({"W00-02", "W09-09"}), grid, 15000), UnknownRoute);
}

TEST_CASE("payload limits") {
  const auto lat = build_lattice(kA, kB, cfg(2, 3, 1));
  const auto model = bundled_aircraft("narrowbody");
  const auto grid = oracle::constant_grid(0, 0, 45, 55, -25, 0);
  PlanningContext ctx{lat, model, {0}, 0.0, {}};
  CHECK_THROWS_AS(optimize(ctx, grid, model.max_payload + 1), Infeasible);
  CHECK_THROWS_AS(optimize(ctx, grid, -1), Infeasible);
  try {
    optimize(ctx, grid, model.max_payload + 1);
  } catch (const Infeasible& e) {
    CHECK(std::string(e.what()).find("max_payload") != std::string::npos);
  }
  const double k = 1.0 + model.reserve.contingency_fraction;
  const double fr = model.reserve.final_reserve_min / 60.0 * model.holding_fuel_flow;
  CHECK(trip_fuel_limit(model, 0) ==
        doctest::Approx(std::min((model.max_fuel - fr) / k, (model.max_takeoff_mass - model.oew - fr) / k)));
}

TEST_CASE("takeoff mass is a fixed point of the trip fuel") {
  std::mt19937_64 rng(12);
  const auto lat = build_lattice(kA, kB, cfg(3, 3, 1));
  const auto model = bundled_aircraft("widebody");
  const auto grid = oracle::random_grid(rng, 30, 44, 56, -26, 1);
  PlanningContext ctx{lat, model, {30}, 0.0, {}};
  const auto plan = optimize(ctx, grid, 30000);
  const auto path = route_indices(lat, plan.route);
  const auto r = evaluate_profile(ctx, grid, path, plan.level_profile, plan.takeoff_mass);
  CHECK(std::abs(r.fuel - plan.trip_fuel) < 0.1 + 1e-9);
}

TEST_CASE("optimize matches exhaustive enumeration with and without pruning") {
  const auto c = oracle::run_router_campaign(60, 2024);
  const std::string first = c.failures.empty() ? std::string() : c.failures.front();
  INFO(first);
  CHECK(c.instances == 60);
  CHECK(c.cost_mismatches == 0);
  CHECK(c.pruning_mismatches == 0);
  CHECK(c.max_abs_diff <= 1e-6);
}
