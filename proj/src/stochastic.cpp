#include "ensplan/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "ensplan/error.hpp"
#include "ensplan/parallel.hpp"
#include "ensplan/stats.hpp"

namespace ensplan {

PayloadDistribution PayloadDistribution::explicit_sigma(double mean, double sigma) {
  PayloadDistribution d;
  d.mean = mean;
  d.sigma_total = sigma;
  d.mode = PayloadMode::ExplicitSigma;
  d.validate();
  return d;
}

PayloadDistribution PayloadDistribution::from_passengers(double mean, double per_passenger_sigma,
                                                         double n_passengers) {
  PayloadDistribution d;
  d.mean = mean;
  d.per_passenger_sigma = per_passenger_sigma;
  d.n_passengers = n_passengers;
  d.sigma_total = payload_sigma(per_passenger_sigma, n_passengers);
  d.mode = PayloadMode::DerivedFromPassengers;
  d.validate();
  return d;
}

PayloadDistribution PayloadDistribution::fraction_of_mean(double mean, double fraction) {
  PayloadDistribution d;
  d.mean = mean;
  d.sigma_total = fraction * mean;
  d.mode = PayloadMode::FractionOfMean;
  d.validate();
  return d;
}

void PayloadDistribution::validate() const {
  if (!(mean >= 0.0)) throw InvalidSpec("payload mean must be non-negative");
  if (!(sigma_total >= 0.0)) throw InvalidSpec("payload sigma must be non-negative");
  if (mode == PayloadMode::DerivedFromPassengers) {
    if (!per_passenger_sigma || !n_passengers)
      throw InvalidSpec("derived payload sigma needs per-passenger sigma and passenger count");
  }
}

double payload_sigma(double per_passenger_sigma, double n_passengers) {
  if (per_passenger_sigma < 0.0 || n_passengers < 0.0)
    throw InvalidSpec("payload_sigma inputs must be non-negative");
  return std::sqrt(per_passenger_sigma * per_passenger_sigma * n_passengers);
}

std::vector<double> payload_representatives(const PayloadDistribution& dist, std::size_t k) {
  if (k == 0) throw InvalidSpec("need at least one payload representative");
  dist.validate();
  std::vector<double> out(k);
  for (std::size_t m = 1; m <= k; ++m) {
    const double p = (2.0 * static_cast<double>(m) - 1.0) / (2.0 * static_cast<double>(k));
    // The middle quantile of an odd k is exactly the mean.
    const double z = (2 * m - 1 == k) ? 0.0 : stats::normal_quantile(p);
    out[m - 1] = dist.mean + dist.sigma_total * z;
  }
  return out;
}

std::string weather_tag(std::optional<std::size_t> member) {
  if (!member) return "control";
  char buf[32];
  std::snprintf(buf, sizeof buf, "m%02zu", *member + 1);
  return buf;
}

ScenarioSet full_factorial(std::vector<const WeatherGrid*> weather, std::vector<std::string> weather_tags,
                           std::vector<double> payloads) {
  if (weather.size() != weather_tags.size()) throw InvalidSpec("one tag per weather grid");
  ScenarioSet s{std::move(weather), std::move(weather_tags), std::move(payloads), {}};
  const double w = 1.0 / static_cast<double>(s.weather.size() * s.payloads.size());
  for (std::size_t p = 0; p < s.payloads.size(); ++p)
    for (std::size_t i = 0; i < s.weather.size(); ++i)
      s.scenarios.push_back({i, p, w, s.weather_tags[i] + "/p" + std::to_string(p + 1)});
  return s;
}

FirstPassResult first_pass(const PlanningContext& ctx, const EnsembleForecast& ensemble,
                           std::span<const double> payloads, std::size_t workers) {
  if (payloads.empty()) throw InvalidSpec("first pass needs at least one payload value");
  std::vector<const WeatherGrid*> grids{&ensemble.control};
  std::vector<std::string> tags{weather_tag(std::nullopt)};
  for (std::size_t m = 0; m < ensemble.members.size(); ++m) {
    grids.push_back(&ensemble.members[m]);
    tags.push_back(weather_tag(m));
  }
  const std::size_t n_runs = grids.size() * payloads.size();
  std::vector<std::optional<FlightPlan>> plans(n_runs);
  std::vector<std::string> errors(n_runs);
  parallel_for(
      n_runs,
      [&](std::size_t r) {
        const std::size_t p = r / grids.size(), w = r % grids.size();
        try {
          plans[r] = optimize(ctx, *grids[w], payloads[p]);
        } catch (const Infeasible& e) {
          errors[r] = e.what();
        }
      },
      workers);

  FirstPassResult out;
  out.runs = n_runs;
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t r = 0; r < n_runs; ++r) {
    const std::string tag = tags[r % grids.size()] + "/p" + std::to_string(r / grids.size() + 1);
    if (!plans[r]) {
      ++out.infeasible_runs;
      out.warnings.push_back("first pass " + tag + " infeasible: " + errors[r]);
      continue;
    }
    const Route& route = plans[r]->route;
    auto [it, inserted] = seen.try_emplace(route.key, out.candidates.size());
    if (inserted) out.candidates.push_back({route, {}});
    out.candidates[it->second].produced_by.push_back(tag);
  }
  if (out.candidates.empty()) throw Infeasible("every first-pass scenario is infeasible");
  return out;
}

std::vector<double> CostMatrix::counted(std::size_t c, const std::vector<std::vector<double>>& values) const {
  std::vector<double> out;
  out.reserve(n_scenarios());
  for (std::size_t j = 0; j < n_scenarios(); ++j) {
    if (!infeasible[c][j])
      out.push_back(values[c][j]);
    else if (infeasible_penalty)
      out.push_back(*infeasible_penalty);
  }
  return out;
}

void CostMatrix::finalize() {
  const std::size_t nc = n_candidates(), ns = n_scenarios();
  auto check = [&](const std::vector<std::vector<double>>& a, const char* name) {
    if (a.size() != nc) throw DimensionMismatch(std::string(name) + " has the wrong number of rows");
    for (const auto& row : a)
      if (row.size() != ns) throw DimensionMismatch(std::string(name) + " has the wrong number of columns");
  };
  if (time.empty()) time.assign(nc, std::vector<double>(ns, 0.0));
  if (infeasible.empty()) infeasible.assign(nc, std::vector<bool>(ns, false));
  check(cost, "cost");
  check(fuel, "fuel");
  check(time, "time");
  if (infeasible.size() != nc) throw DimensionMismatch("infeasible mask has the wrong number of rows");
  column_means.assign(nc, std::numeric_limits<double>::infinity());
  column_max.assign(nc, std::numeric_limits<double>::infinity());
  all_infeasible.assign(nc, true);
  for (std::size_t i = 0; i < nc; ++i) {
    const auto c = counted(i, cost);
    if (c.empty()) continue;
    all_infeasible[i] = false;
    column_means[i] = stats::order_free_sum(c) / static_cast<double>(c.size());
    const auto f = counted(i, fuel);
    column_max[i] = *std::max_element(f.begin(), f.end());
  }
}

CostMatrix make_cost_matrix(std::vector<Route> candidates, std::vector<std::string> scenario_tags,
                            std::vector<std::vector<double>> cost, std::vector<std::vector<double>> fuel,
                            std::vector<std::vector<double>> time, std::vector<std::vector<bool>> infeasible) {
  CostMatrix m;
  m.candidates = std::move(candidates);
  m.scenario_tags = std::move(scenario_tags);
  m.cost = std::move(cost);
  m.fuel = std::move(fuel);
  m.time = std::move(time);
  m.infeasible = std::move(infeasible);
  m.finalize();
  return m;
}

CostMatrix second_pass(const PlanningContext& ctx, std::span<const Route> candidates,
                       const ScenarioSet& scenarios, const SecondPassOptions& options) {
  if (candidates.empty()) throw InvalidSpec("second pass needs at least one candidate");
  const std::size_t nc = candidates.size(), ns = scenarios.scenarios.size();
  CostMatrix m;
  m.candidates.assign(candidates.begin(), candidates.end());
  for (const auto& s : scenarios.scenarios) m.scenario_tags.push_back(s.tag);
  m.cost.assign(nc, std::vector<double>(ns, 0.0));
  m.fuel = m.cost;
  m.time = m.cost;
  m.infeasible.assign(nc, std::vector<bool>(ns, false));
  m.infeasible_penalty = options.infeasible_penalty;
  // vector<bool> rows are packed; collect flags separately to keep writes disjoint.
  std::vector<char> bad(nc * ns, 0);
  parallel_for(
      nc * ns,
      [&](std::size_t cell) {
        const std::size_t i = cell / ns, j = cell % ns;
        const Scenario& s = scenarios.scenarios[j];
        try {
          const FlightPlan p = recost_route(ctx, candidates[i], *scenarios.weather[s.weather], scenarios.payloads[s.payload]);
          m.cost[i][j] = p.cost;
          m.fuel[i][j] = p.trip_fuel;
          m.time[i][j] = p.trip_time;
        } catch (const Infeasible&) {
          bad[cell] = 1;
        }
      },
      options.workers);
  for (std::size_t cell = 0; cell < nc * ns; ++cell) {
    if (!bad[cell]) continue;
    const std::size_t i = cell / ns, j = cell % ns;
    m.infeasible[i][j] = true;
    if (options.infeasible_penalty) {
      m.cost[i][j] = *options.infeasible_penalty;
      m.fuel[i][j] = *options.infeasible_penalty;
    }
  }
  m.finalize();
  return m;
}

std::string to_string(Criterion c) { return c == Criterion::Minimax ? "minimax" : "expected"; }

Criterion parse_criterion(const std::string& s) {
  if (s == "expected" || s == "expected_value") return Criterion::ExpectedValue;
  if (s == "minimax") return Criterion::Minimax;
  throw ConfigError("unknown criterion '" + s + "' (expected | minimax)");
}

SelectionResult select(const CostMatrix& m, Criterion criterion, std::span<const std::size_t> exclusions) {
  const std::size_t nc = m.n_candidates();
  std::vector<bool> excluded(nc, false);
  for (auto e : exclusions) {
    if (e >= nc) throw InvalidSpec("excluded index " + std::to_string(e) + " out of range");
    excluded[e] = true;
  }
  const auto& score = criterion == Criterion::Minimax ? m.column_max : m.column_means;
  const auto& values = criterion == Criterion::Minimax ? m.fuel : m.cost;
  if (score.size() != nc) throw DimensionMismatch("cost matrix summaries missing; call finalize()");

  SelectionResult r;
  r.criterion = criterion;
  for (std::size_t i = 0; i < nc; ++i)
    if (excluded[i]) r.excluded_indices.push_back(i);
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < nc; ++i) {
    if (excluded[i] || m.all_infeasible[i]) continue;
    if (!best || score[i] < score[*best] ||
        (score[i] == score[*best] && m.candidates[i].key < m.candidates[*best].key))
      best = i;
  }
  if (!best) throw NothingToSelect("no candidate left after exclusions and infeasibility");
  r.selected_index = *best;
  r.selected_route = m.candidates[*best];
  r.per_candidate_stats.resize(nc);
  for (std::size_t i = 0; i < nc; ++i) {
    const auto v = m.counted(i, values);
    if (v.empty()) continue;
    const auto b = stats::box_stats(v);
    r.per_candidate_stats[i] =
        CandidateStats{stats::order_free_sum(v) / static_cast<double>(v.size()), b.max, b.min, b.q1, b.median, b.q3, v.size()};
  }
  return r;
}

SelectionResult select_expected(const CostMatrix& m, std::span<const std::size_t> exclusions) {
  return select(m, Criterion::ExpectedValue, exclusions);
}

SelectionResult select_minimax(const CostMatrix& m, std::span<const std::size_t> exclusions) {
  return select(m, Criterion::Minimax, exclusions);
}

StochasticRun run_stochastic_plan(const PlanningContext& ctx, const EnsembleForecast& ensemble,
                                  const PayloadDistribution& payload, const StochasticConfig& config) {
  StochasticRun run;
  run.payloads = payload_representatives(payload, config.payload_samples);
  run.first = first_pass(ctx, ensemble, run.payloads, config.workers);

  std::vector<const WeatherGrid*> grids;
  std::vector<std::string> tags;
  if (config.second_pass_include_control) {
    grids.push_back(&ensemble.control);
    tags.push_back(weather_tag(std::nullopt));
  }
  for (std::size_t m = 0; m < ensemble.members.size(); ++m) {
    grids.push_back(&ensemble.members[m]);
    tags.push_back(weather_tag(m));
  }
  if (grids.empty()) {
    // An ensemble without perturbed members can only be scored on its control.
    grids.push_back(&ensemble.control);
    tags.push_back(weather_tag(std::nullopt));
  }
  const ScenarioSet scenarios = config.sampler(std::move(grids), std::move(tags), run.payloads);

  std::vector<Route> routes;
  for (const auto& c : run.first.candidates) routes.push_back(c.route);
  run.matrix = second_pass(ctx, routes, scenarios, {config.infeasible_penalty, config.workers});
  run.selection = select(run.matrix, config.criterion);

  auto& a = run.audit;
  a.first_pass_runs = run.first.runs;
  a.first_pass_infeasible = run.first.infeasible_runs;
  a.unique_candidates = run.first.candidates.size();
  a.dedup_savings = run.first.runs - a.unique_candidates;
  a.second_pass_scenarios = scenarios.scenarios.size();
  a.second_pass_cells = a.unique_candidates * a.second_pass_scenarios;
  for (const auto& row : run.matrix.infeasible)
    a.second_pass_infeasible_cells += static_cast<std::size_t>(std::count(row.begin(), row.end(), true));
  a.nominal_second_pass_cells = a.first_pass_runs * a.second_pass_scenarios;
  a.total_runs = a.first_pass_runs + a.second_pass_cells;
  a.nominal_total_runs = a.first_pass_runs + a.nominal_second_pass_cells;
  a.warnings = run.first.warnings;
  for (std::size_t i = 0; i < run.matrix.n_candidates(); ++i)
    if (run.matrix.all_infeasible[i])
      a.warnings.push_back("candidate " + std::to_string(i) + " infeasible in every scenario");
  return run;
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json to_json(const CostMatrix& m) {
  nlohmann::ordered_json j;
  j["candidates"] = nlohmann::ordered_json::array();
  for (const auto& r : m.candidates) j["candidates"].push_back(r.key);
  j["scenarios"] = m.scenario_tags;
  j["cost"] = m.cost;
  j["fuel"] = m.fuel;
  j["time"] = m.time;
  j["infeasible"] = m.infeasible;
  j["infeasible_penalty"] = m.infeasible_penalty ? nlohmann::ordered_json(*m.infeasible_penalty) : nlohmann::ordered_json(nullptr);
  auto finite_or_null = [](const std::vector<double>& v) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (double x : v) a.push_back(std::isfinite(x) ? nlohmann::ordered_json(x) : nlohmann::ordered_json(nullptr));
    return a;
  };
  j["column_means"] = finite_or_null(m.column_means);
  j["column_max"] = finite_or_null(m.column_max);
  return j;
}

CostMatrix cost_matrix_from_json(const nlohmann::json& j) {
  try {
    std::vector<Route> routes;
    for (const auto& k : j.at("candidates")) {
      std::vector<std::string> ids;
      const auto key = k.get<std::string>();
      std::size_t start = 0;
      while (true) {
        const auto pos = key.find('>', start);
        ids.push_back(key.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
      }
      routes.push_back(Route::from_ids(std::move(ids)));
    }
    CostMatrix m = make_cost_matrix(std::move(routes), j.at("scenarios").get<std::vector<std::string>>(),
                                    j.at("cost").get<std::vector<std::vector<double>>>(),
                                    j.at("fuel").get<std::vector<std::vector<double>>>(),
                                    j.at("time").get<std::vector<std::vector<double>>>(),
                                    j.at("infeasible").get<std::vector<std::vector<bool>>>());
    if (!j.at("infeasible_penalty").is_null()) {
      m.infeasible_penalty = j.at("infeasible_penalty").get<double>();
      m.finalize();
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(0, std::string("matrix.json: ") + e.what());
  }
}

nlohmann::json to_json(const SelectionResult& s) {
  nlohmann::ordered_json j;
  j["criterion"] = to_string(s.criterion);
  j["selected_index"] = s.selected_index;
  j["selected_route"] = s.selected_route.waypoint_ids;
  j["selected_route_key"] = s.selected_route.key;
  j["excluded_indices"] = s.excluded_indices;
  j["stats_of"] = s.criterion == Criterion::Minimax ? "fuel" : "cost";
  j["per_candidate_stats"] = nlohmann::ordered_json::array();
  for (const auto& st : s.per_candidate_stats) {
    if (!st) {
      j["per_candidate_stats"].push_back(nullptr);
      continue;
    }
    j["per_candidate_stats"].push_back({{"mean", st->mean},
                                        {"max", st->max},
                                        {"min", st->min},
                                        {"q1", st->q1},
                                        {"median", st->median},
                                        {"q3", st->q3},
                                        {"cells", st->cells}});
  }
  return j;
}

nlohmann::json to_json(const Audit& a) {
  nlohmann::ordered_json j;
  j["first_pass_runs"] = a.first_pass_runs;
  j["first_pass_infeasible"] = a.first_pass_infeasible;
  j["unique_candidates"] = a.unique_candidates;
  j["dedup_savings"] = a.dedup_savings;
  j["second_pass_scenarios"] = a.second_pass_scenarios;
  j["second_pass_cells"] = a.second_pass_cells;
  j["second_pass_infeasible_cells"] = a.second_pass_infeasible_cells;
  j["nominal_second_pass_cells"] = a.nominal_second_pass_cells;
  j["total_runs"] = a.total_runs;
  j["nominal_total_runs"] = a.nominal_total_runs;
  j["warnings"] = a.warnings;
  return j;
}

nlohmann::json candidates_json(const FirstPassResult& first, const Lattice& lattice) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < first.candidates.size(); ++i) {
    const auto& c = first.candidates[i];
    nlohmann::ordered_json poly = nlohmann::ordered_json::array();
    for (const auto& p : route_polyline(lattice, c.route)) poly.push_back({p.lat, p.lon});
    arr.push_back({{"index", i},
                   {"route_key", c.route.key},
                   {"waypoints", c.route.waypoint_ids},
                   {"polyline", poly},
                   {"produced_by", c.produced_by}});
  }
  return arr;
}

nlohmann::json to_json(const PayloadDistribution& p) {
  nlohmann::ordered_json j;
  j["mean"] = p.mean;
  j["sigma_total"] = p.sigma_total;
  j["mode"] = p.mode == PayloadMode::DerivedFromPassengers ? "derived_from_passengers"
              : p.mode == PayloadMode::FractionOfMean       ? "fraction_of_mean"
                                                            : "explicit_sigma";
  if (p.per_passenger_sigma) j["per_passenger_sigma"] = *p.per_passenger_sigma;
  if (p.n_passengers) j["n_passengers"] = *p.n_passengers;
  return j;
}

}  // namespace ensplan
