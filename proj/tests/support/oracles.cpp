#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "ensplan/geo.hpp"

namespace oracle {

using namespace ensplan;

namespace {

void dfs(const Lattice& lat, std::size_t w, std::vector<std::size_t>& cur, std::vector<std::vector<std::size_t>>& out) {
  cur.push_back(w);
  if (w == lat.destination) {
    out.push_back(cur);
  } else {
    for (auto s : lat.successors[w]) dfs(lat, s, cur, out);
  }
  cur.pop_back();
}

// Affine flow over the leg, fuel at the mean mass: F = (b + c (m0 - oew - F/2)) t.
struct LegOut {
  double fuel, hours;
};

std::optional<LegOut> leg_fuel(const AircraftModel& m, std::size_t level, double length_m, double course_deg,
                               double u, double v, double start_mass) {
  const auto& l = m.levels.at(level);
  const double c = course_deg * M_PI / 180.0;
  const double gs = l.tas + u * std::sin(c) + v * std::cos(c);
  if (gs <= 0.0 || start_mass < m.oew) return std::nullopt;
  const double t = length_m / gs / 3600.0;
  // Solve by iteration rather than the closed form used by the library.
  double f = 0.0;
  for (int k = 0; k < 200; ++k) {
    const double next = (l.fuel_flow_base + l.fuel_flow_mass_coeff * (start_mass - m.oew - 0.5 * f)) * t;
    if (std::abs(next - f) < 1e-12 * std::max(1.0, next)) {
      f = next;
      break;
    }
    f = next;
  }
  if (start_mass - f < m.oew) return std::nullopt;
  return LegOut{f, t};
}

}  // namespace

std::vector<std::vector<std::size_t>> all_paths(const Lattice& lat) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> cur;
  dfs(lat, lat.origin, cur, out);
  return out;
}

std::optional<Combo> fly(const PlanningContext& ctx, const WeatherGrid& w, const std::vector<std::size_t>& path,
                         const std::vector<std::size_t>& levels, double takeoff_mass) {
  const auto& lat = ctx.lattice;
  const auto& m = ctx.model;
  double tas_sum = 0.0;
  for (auto l : lat.levels) tas_sum += m.levels.at(l).tas;
  const double ref_tas = tas_sum / static_cast<double>(lat.levels.size());
  const double n_gaps = static_cast<double>(lat.layers.size() - 1);

  Combo c{path, levels, 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const std::size_t lv = levels[i];
    const double steps = i == 0 ? static_cast<double>(lv + 1)
                                : std::abs(static_cast<double>(lv) - static_cast<double>(levels[i - 1]));
    c.fuel += steps * m.climb_fuel_per_level_step;
    c.time += steps * m.climb_time_per_level_step;

    const auto& a = lat.waypoints[path[i]];
    const auto& b = lat.waypoints[path[i + 1]];
    const auto mid = geo::intermediate(a.pos, b.pos, 0.5);
    // Weather time: where the flight nominally is along the corridor.
    const double frac = 0.5 * static_cast<double>(a.layer + b.layer) / n_gaps;
    const double t_h = ctx.departure_h + frac * lat.great_circle_m / ref_tas / 3600.0;
    const auto wt = sample_at(w, mid.lat, mid.lon, m.levels.at(lv).pressure_hpa, t_h);
    const auto leg = leg_fuel(m, lv, geo::distance_m(a.pos, b.pos), geo::initial_course_deg(mid, b.pos), wt.u, wt.v,
                              takeoff_mass - c.fuel);
    if (!leg) return std::nullopt;
    c.fuel += leg->fuel;
    c.time += leg->hours * 60.0;
  }
  c.cost = c.fuel + ctx.ci.ci * c.time;
  return c;
}

std::optional<Combo> exhaustive(const PlanningContext& ctx, const WeatherGrid& w, double takeoff_mass,
                                double trip_limit, const std::vector<std::size_t>* only_path) {
  std::optional<Combo> best;
  const auto& lat = ctx.lattice;
  std::vector<std::vector<std::size_t>> paths = only_path ? std::vector<std::vector<std::size_t>>{*only_path} : all_paths(lat);
  for (const auto& p : paths) {
    const std::size_t legs = p.size() - 1;
    std::vector<std::size_t> idx(legs, 0);
    while (true) {
      std::vector<std::size_t> levels(legs);
      for (std::size_t k = 0; k < legs; ++k) levels[k] = lat.levels[idx[k]];
      auto c = fly(ctx, w, p, levels, takeoff_mass);
      if (c && c->fuel <= trip_limit && (!best || c->cost < best->cost)) best = c;
      std::size_t k = legs;
      while (k > 0 && ++idx[k - 1] == lat.levels.size()) idx[--k] = 0;
      if (k == 0) break;
    }
  }
  return best;
}

std::size_t combo_count(const Lattice& lat) {
  std::size_t n = 0;
  for (const auto& p : all_paths(lat)) {
    std::size_t c = 1;
    for (std::size_t k = 0; k + 1 < p.size(); ++k) c *= lat.levels.size();
    n += c;
  }
  return n;
}

namespace {

std::size_t argmin_by(const std::vector<double>& score, const std::vector<std::string>& keys) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < score.size(); ++i)
    if (score[i] < score[best] || (score[i] == score[best] && keys[i] < keys[best])) best = i;
  return best;
}

}  // namespace

std::size_t argmin_row_mean(const std::vector<std::vector<double>>& m, const std::vector<std::string>& keys) {
  std::vector<double> s;
  for (const auto& row : m) {
    // Sorted summation so the oracle and the library agree on exact ties.
    std::vector<double> r = row;
    std::sort(r.begin(), r.end());
    long double acc = 0;
    for (double x : r) acc += x;
    s.push_back(static_cast<double>(acc / r.size()));
  }
  return argmin_by(s, keys);
}

std::size_t argmin_row_max(const std::vector<std::vector<double>>& m, const std::vector<std::string>& keys) {
  std::vector<double> s;
  for (const auto& row : m) s.push_back(*std::max_element(row.begin(), row.end()));
  return argmin_by(s, keys);
}

double normal_quantile(double p) { return boost::math::quantile(boost::math::normal_distribution<double>(), p); }

double t_test_p(const std::vector<double>& d, double* t_out) {
  const double n = static_cast<double>(d.size());
  double mean = 0.0;
  for (double x : d) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : d) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  const double t = mean / (sd / std::sqrt(n));
  if (t_out) *t_out = t;
  boost::math::students_t_distribution<double> dist(n - 1.0);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

WeatherGrid constant_grid(double u, double v, double lat0, double lat1, double lon0, double lon1,
                          std::vector<double> levels, double t_end_h) {
  GridAxes ax = make_axes(lat0, lat1, lon0, lon1, 1.0, std::move(levels), t_end_h, 6.0);
  const std::size_t n = ax.size();
  std::vector<double> T(n);
  std::size_t i = 0;
  for (std::size_t a = 0; a < ax.lat.size(); ++a)
    for (std::size_t b = 0; b < ax.lon.size(); ++b)
      for (std::size_t l = 0; l < ax.level.size(); ++l)
        for (std::size_t t = 0; t < ax.time.size(); ++t) T[i++] = isa_temperature(ax.level[l]);
  return WeatherGrid(ax, std::vector<double>(n, u), std::vector<double>(n, v), std::move(T));
}

WeatherGrid random_grid(std::mt19937_64& rng, double amp, double lat0, double lat1, double lon0, double lon1,
                        double step, std::vector<double> levels, double t_end_h) {
  GridAxes ax = make_axes(lat0, lat1, lon0, lon1, step, std::move(levels), t_end_h, 6.0);
  const std::size_t n = ax.size();
  std::uniform_real_distribution<double> U(-amp, amp);
  std::vector<double> u(n), v(n), T(n, 220.0);
  for (std::size_t i = 0; i < n; ++i) {
    u[i] = U(rng);
    v[i] = U(rng);
  }
  return WeatherGrid(ax, std::move(u), std::move(v), std::move(T));
}

AircraftModel toy_aircraft() {
  AircraftModel m;
  m.name = "toy";
  m.oew = 40000;
  m.max_fuel = 20000;
  m.max_payload = 18000;
  m.max_takeoff_mass = 76000;
  m.levels = {{300, 220, 1900, 0.020}, {250, 230, 1750, 0.025}, {200, 232, 1650, 0.031}};
  m.climb_fuel_per_level_step = 100;
  m.climb_time_per_level_step = 2.0;
  m.holding_fuel_flow = 2000;
  return m;
}

}  // namespace oracle
