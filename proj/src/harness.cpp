#include "ensplan/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ensplan/error.hpp"
#include "ensplan/parallel.hpp"
#include "ensplan/random.hpp"

namespace ensplan::harness {

namespace {

constexpr std::uint64_t kWeatherStream = 0x11;
constexpr std::uint64_t kPayloadStream = 0x22;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

const Candidate& control_candidate(const FirstPassResult& first) {
  const std::string tag = weather_tag(std::nullopt) + "/p1";
  for (const auto& c : first.candidates)
    if (std::find(c.produced_by.begin(), c.produced_by.end(), tag) != c.produced_by.end()) return c;
  throw Infeasible("control member produced no feasible plan");
}

std::size_t candidate_index(const CostMatrix& m, const Route& r) {
  for (std::size_t i = 0; i < m.candidates.size(); ++i)
    if (m.candidates[i] == r) return i;
  throw UnknownRoute("route not among candidates: " + r.key);
}

nlohmann::json histogram_json(const stats::Histogram& h) {
  return {{"edges", h.edges}, {"densities", h.densities}, {"counts", h.counts}};
}

nlohmann::json truth_json(const TruthCost& t) { return {{"fuel", t.fuel}, {"time", t.time}, {"cost", t.cost}}; }

}  // namespace

std::vector<CityPair> default_city_pairs() {
  const std::vector<std::pair<Airport, Airport>> legs = {
      {{"JFK", {40.64, -73.78}}, {"LHR", {51.47, -0.45}}},
      {{"BOS", {42.36, -71.01}}, {"CDG", {49.01, 2.55}}},
      {{"YYZ", {43.68, -79.63}}, {"AMS", {52.31, 4.76}}},
      {{"ORD", {41.98, -87.90}}, {"FRA", {50.03, 8.56}}},
      {{"IAD", {38.95, -77.46}}, {"MAD", {40.47, -3.56}}},
      {{"YUL", {45.47, -73.74}}, {"FCO", {41.80, 12.25}}},
      {{"EWR", {40.69, -74.17}}, {"DUB", {53.42, -6.27}}},
      {{"ATL", {33.64, -84.43}}, {"MUC", {48.35, 11.79}}},
      {{"PHL", {39.87, -75.24}}, {"LIS", {38.77, -9.13}}},
      {{"CLT", {35.21, -80.94}}, {"ZRH", {47.46, 8.55}}},
      {{"YHZ", {44.88, -63.51}}, {"KEF", {63.98, -22.61}}},
      {{"DTW", {42.21, -83.35}}, {"CPH", {55.62, 12.65}}},
  };
  std::vector<CityPair> out;
  for (const auto& [a, b] : legs) {
    out.push_back({a, b});
    out.push_back({b, a});
  }
  return out;
}

void ExperimentConfig::validate() const {
  if (city_pairs.empty()) throw InvalidSpec("experiment needs at least one city pair");
  if (n_flights == 0) throw InvalidSpec("experiment needs at least one flight");
  if (!(tie_tolerance_kg >= 0.0)) throw InvalidSpec("tie tolerance must be >= 0");
  if (histogram_bins == 0) throw InvalidSpec("histogram needs at least one bin");
  if (payload_samples == 0) throw InvalidSpec("payload_samples must be >= 1");
  if (!(grid.step_deg > 0.0) || !(grid.margin_deg >= 0.0) || !(grid.time_step_h > 0.0))
    throw InvalidSpec("grid step, margin and time step must be positive");
  if (!(departure_h >= 0.0)) throw InvalidSpec("departure must not precede issuance");
  weather.validate();
  aircraft.validate();
  payload.validate();
}

GridAxes domain_axes(const GridConfig& grid, const Lattice& lattice, double min_tas_mps, double departure_h) {
  double lat_lo = 90, lat_hi = -90, lon_lo = 180, lon_hi = -180;
  for (const auto& w : lattice.waypoints) {
    lat_lo = std::min(lat_lo, w.pos.lat);
    lat_hi = std::max(lat_hi, w.pos.lat);
    lon_lo = std::min(lon_lo, w.pos.lon);
    lon_hi = std::max(lon_hi, w.pos.lon);
  }
  // Great-circle legs bulge poleward of their endpoints by a fraction of a
  // degree at these lengths; the margin covers it.
  const double m = grid.margin_deg;
  const double end_h = departure_h + lattice.great_circle_m / min_tas_mps / 3600.0 + 1.0;
  return make_axes(std::max(-90.0, lat_lo - m), std::min(90.0, lat_hi + m), lon_lo - m, lon_hi + m, grid.step_deg,
                   grid.levels_hpa, end_h, grid.time_step_h);
}

GridAxes flight_axes(const ExperimentConfig& config, const Lattice& lattice) {
  double min_tas = 1e9;
  for (auto l : lattice.levels) min_tas = std::min(min_tas, config.aircraft.level(l).tas);
  return domain_axes(config.grid, lattice, min_tas, config.departure_h);
}

FlightSetup prepare_flight(const ExperimentConfig& config, std::size_t index) {
  FlightSetup f;
  f.index = index;
  f.pair = config.city_pairs[index % config.city_pairs.size()];
  f.seed = derive_seed(config.seed, {index});
  char buf[64];
  std::snprintf(buf, sizeof buf, "F%04zu-%s-%s", index, f.pair.origin.code.c_str(), f.pair.destination.code.c_str());
  f.flight_id = buf;
  f.lattice = build_lattice(f.pair.origin.pos, f.pair.destination.pos, config.lattice);
  f.axes = flight_axes(config, f.lattice);
  return f;
}

EnsembleWithTruth flight_weather(const ExperimentConfig& config, const FlightSetup& flight) {
  SyntheticWeatherSpec spec = config.weather;
  spec.seed = derive_seed(flight.seed, {kWeatherStream});
  return generate_ensemble(spec, flight.axes);
}

TruthCost evaluate_truth(const PlanningContext& ctx, const Route& route, const Nowcast& nowcast, double payload) {
  const FlightPlan p = recost_route(ctx, route, nowcast.grid(), payload);
  return {p.trip_fuel, p.trip_time, p.cost};
}

std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::StochWins: return "stoch_wins";
    case Outcome::DetWins: return "det_wins";
    case Outcome::Tie: return "tie";
  }
  return "?";
}

Outcome classify(double fuel_saving, double tie_tolerance_kg) {
  if (std::abs(fuel_saving) <= tie_tolerance_kg) return Outcome::Tie;
  return fuel_saving < 0.0 ? Outcome::StochWins : Outcome::DetWins;
}

FlightComparison compare_flight(const ExperimentConfig& config, std::size_t index, RunAccounting* accounting) {
  const FlightSetup flight = prepare_flight(config, index);
  const EnsembleWithTruth w = flight_weather(config, flight);
  const PlanningContext ctx{flight.lattice, config.aircraft, config.ci, config.departure_h};
  const double payload = config.payload.mean;

  StochasticConfig sc;
  sc.payload_samples = 1;
  sc.workers = 1;
  const StochasticRun run =
      run_stochastic_plan(ctx, w.ensemble, PayloadDistribution::explicit_sigma(payload, 0.0), sc);

  // The deterministic plan is the control run of the first pass. Its second
  // pass is a recost under the control grid: one extra optimiser call.
  const Route det_route = control_candidate(run.first).route;
  recost_route(ctx, det_route, w.ensemble.control, payload);

  const Nowcast nowcast(w);
  std::vector<TruthCost> truth(run.matrix.n_candidates());
  for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = evaluate_truth(ctx, run.matrix.candidates[i], nowcast, payload);

  FlightComparison c;
  c.flight_id = flight.flight_id;
  c.det_route = det_route;
  c.stoch_route = run.selection.selected_route;
  c.det_truth = truth[candidate_index(run.matrix, det_route)];
  c.stoch_truth = truth[run.selection.selected_index];
  c.fuel_saving = c.stoch_truth.fuel - c.det_truth.fuel;
  c.time_saving = c.stoch_truth.time - c.det_truth.time;
  c.cost_saving = c.stoch_truth.cost - c.det_truth.cost;
  c.outcome = classify(c.fuel_saving, config.tie_tolerance_kg);
  c.unique_candidates = run.matrix.n_candidates();

  if (accounting) {
    accounting->first_pass_runs = run.audit.first_pass_runs;
    accounting->second_pass_cells = run.audit.second_pass_cells;
    accounting->truth_evaluations = truth.size();
    accounting->deterministic_recosts = 1;
    accounting->total_runs = run.audit.first_pass_runs + run.audit.second_pass_cells + truth.size() + 1;
  }
  return c;
}

stats::Histogram savings_histogram(const std::vector<double>& values, std::size_t n_bins) {
  if (values.empty()) throw EmptyVector("no savings to histogram");
  return stats::histogram(values, n_bins);
}

std::string format_kg(double v) { return fmt("%.1f kg", v); }

ComparisonReport run_comparison(const ExperimentConfig& config) {
  config.validate();
  const std::size_t n = config.n_flights;
  std::vector<std::optional<FlightComparison>> results(n);
  std::vector<RunAccounting> acc(n);
  std::vector<std::string> errors(n);
  parallel_for(
      n,
      [&](std::size_t i) {
        try {
          results[i] = compare_flight(config, i, &acc[i]);
        } catch (const Error& e) {
          errors[i] = e.what();
        }
      },
      config.workers);

  ComparisonReport r;
  r.tie_tolerance_kg = config.tie_tolerance_kg;
  std::vector<double> fuel, time, cost;
  for (std::size_t i = 0; i < n; ++i) {
    if (!results[i]) {
      r.failures.push_back({prepare_flight(config, i).flight_id, errors[i]});
      continue;
    }
    const auto& c = *results[i];
    switch (c.outcome) {
      case Outcome::StochWins: ++r.stoch_wins; break;
      case Outcome::DetWins: ++r.det_wins; break;
      case Outcome::Tie: ++r.ties; break;
    }
    fuel.push_back(c.fuel_saving);
    time.push_back(c.time_saving);
    cost.push_back(c.cost_saving);
    r.accounting.first_pass_runs += acc[i].first_pass_runs;
    r.accounting.second_pass_cells += acc[i].second_pass_cells;
    r.accounting.truth_evaluations += acc[i].truth_evaluations;
    r.accounting.deterministic_recosts += acc[i].deterministic_recosts;
    r.accounting.total_runs += acc[i].total_runs;
    r.flights.push_back(c);
  }
  std::sort(r.flights.begin(), r.flights.end(),
            [](const FlightComparison& a, const FlightComparison& b) { return a.flight_id < b.flight_id; });
  r.n_failed = r.failures.size();
  r.n_flights = r.flights.size();
  if (r.n_flights == 0) return r;
  const double nf = static_cast<double>(r.n_flights);
  r.frac_stoch_wins = r.stoch_wins / nf;
  r.frac_det_wins = r.det_wins / nf;
  r.frac_ties = r.ties / nf;
  r.frac_win_or_tie = (r.stoch_wins + r.ties) / nf;
  r.mean_fuel_saving = stats::order_free_sum(fuel) / nf;
  r.mean_time_saving = stats::order_free_sum(time) / nf;
  r.mean_cost_saving = stats::order_free_sum(cost) / nf;
  r.fuel_histogram = savings_histogram(fuel, config.histogram_bins);
  r.time_histogram = savings_histogram(time, config.histogram_bins);
  return r;
}

nlohmann::json to_json(const ComparisonReport& r) {
  nlohmann::json flights = nlohmann::json::array();
  for (const auto& c : r.flights) {
    flights.push_back({{"flight_id", c.flight_id},
                       {"det_route", c.det_route.key},
                       {"stoch_route", c.stoch_route.key},
                       {"det_truth", truth_json(c.det_truth)},
                       {"stoch_truth", truth_json(c.stoch_truth)},
                       {"fuel_saving", c.fuel_saving},
                       {"time_saving", c.time_saving},
                       {"cost_saving", c.cost_saving},
                       {"outcome", to_string(c.outcome)},
                       {"unique_candidates", c.unique_candidates}});
  }
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : r.failures) failures.push_back({{"flight_id", f.flight_id}, {"reason", f.reason}});
  return {{"n_flights", r.n_flights},
          {"n_failed", r.n_failed},
          {"failures", failures},
          {"tie_tolerance_kg", r.tie_tolerance_kg},
          {"counts", {{"stoch_wins", r.stoch_wins}, {"det_wins", r.det_wins}, {"ties", r.ties}}},
          {"fractions",
           {{"stoch_wins", r.frac_stoch_wins},
            {"det_wins", r.frac_det_wins},
            {"ties", r.frac_ties},
            {"win_or_tie", r.frac_win_or_tie}}},
          {"mean_fuel_saving_kg", r.mean_fuel_saving},
          {"mean_time_saving_min", r.mean_time_saving},
          {"mean_cost_saving", r.mean_cost_saving},
          {"fuel_saving_histogram", histogram_json(r.fuel_histogram)},
          {"time_saving_histogram", histogram_json(r.time_histogram)},
          {"accounting",
           {{"first_pass_runs", r.accounting.first_pass_runs},
            {"second_pass_cells", r.accounting.second_pass_cells},
            {"truth_evaluations", r.accounting.truth_evaluations},
            {"deterministic_recosts", r.accounting.deterministic_recosts},
            {"total_runs", r.accounting.total_runs}}},
          {"flights", flights}};
}

std::string format_report(const ComparisonReport& r) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "Flights compared: %zu (failed: %zu)\n", r.n_flights, r.n_failed);
  os << buf;
  std::snprintf(buf, sizeof buf, "Stochastic better: %5.1f%%  (%zu)\n", 100.0 * r.frac_stoch_wins, r.stoch_wins);
  os << buf;
  std::snprintf(buf, sizeof buf, "Tie (|d| <= %.1f kg): %5.1f%%  (%zu)\n", r.tie_tolerance_kg, 100.0 * r.frac_ties, r.ties);
  os << buf;
  std::snprintf(buf, sizeof buf, "Deterministic better: %5.1f%%  (%zu)\n", 100.0 * r.frac_det_wins, r.det_wins);
  os << buf;
  std::snprintf(buf, sizeof buf, "Stochastic better or tie: %5.1f%%\n", 100.0 * r.frac_win_or_tie);
  os << buf;
  os << "Mean fuel saving (stoch - det): " << format_kg(r.mean_fuel_saving) << '\n';
  os << "Mean time saving (stoch - det): " << fmt("%.3f min", r.mean_time_saving) << '\n';
  std::snprintf(buf, sizeof buf, "Optimiser runs: %zu first pass + %zu second pass + %zu nowcast + %zu deterministic = %zu\n",
                r.accounting.first_pass_runs, r.accounting.second_pass_cells, r.accounting.truth_evaluations,
                r.accounting.deterministic_recosts, r.accounting.total_runs);
  os << buf;
  for (const auto& f : r.failures) os << "failed " << f.flight_id << ": " << f.reason << '\n';
  return os.str();
}

std::string histogram_csv(const stats::Histogram& h) {
  std::ostringstream os;
  os << "bin_low,bin_high,count,density\n";
  char buf[128];
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%zu,%.17g\n", h.edges[b], h.edges[b + 1], h.counts[b], h.densities[b]);
    os << buf;
  }
  return os.str();
}

// ---------------------------------------------------------------------------

PairedRow paired_row(std::string flight_id, std::string od, double fixed_fuel, double uncertain_fuel,
                     double true_payload) {
  PairedRow row;
  row.flight_id = std::move(flight_id);
  row.od = std::move(od);
  row.fixed_fuel = fixed_fuel;
  row.uncertain_fuel = uncertain_fuel;
  row.difference = fixed_fuel - uncertain_fuel;
  row.true_payload = true_payload;
  return row;
}

PairedStudyReport summarize_paired(std::vector<PairedRow> rows) {
  PairedStudyReport r;
  r.rows = std::move(rows);
  if (r.rows.empty()) {
    r.ttest_note = "no rows";
    return r;
  }
  std::vector<double> d, fixed;
  for (const auto& row : r.rows) {
    d.push_back(row.difference);
    fixed.push_back(row.fixed_fuel);
    if (row.difference > 0) ++r.positives;
    else if (row.difference < 0) ++r.negatives;
    else ++r.zeros;
  }
  const double sum_d = stats::order_free_sum(d);
  r.mean_difference = sum_d / static_cast<double>(d.size());
  const double sum_fixed = stats::order_free_sum(fixed);
  r.weighted_mean_pct = sum_fixed != 0.0 ? 100.0 * sum_d / sum_fixed : 0.0;
  try {
    r.ttest = stats::paired_t_test(d);
  } catch (const NoVariance& e) {
    r.ttest_note = std::string("NoVariance: ") + e.what();
  } catch (const TooFewSamples& e) {
    r.ttest_note = std::string("TooFewSamples: ") + e.what();
  }
  return r;
}

double true_payload(const ExperimentConfig& config, const FlightSetup& flight) {
  const double mu = config.payload.mean, sigma = config.payload.sigma_total;
  if (sigma == 0.0) return mu;
  std::mt19937_64 rng(derive_seed(flight.seed, {kPayloadStream}));
  // Box-Muller on raw engine output keeps the draw library-independent.
  const double u1 = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
  const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * geo::kPi * u2);
  return std::clamp(mu + sigma * z, 0.0, config.aircraft.max_payload);
}

PairedStudyReport run_payload_study(const ExperimentConfig& config) {
  config.validate();
  const std::size_t n = config.n_flights;
  std::vector<std::optional<PairedRow>> rows(n);
  std::vector<std::string> errors(n);
  parallel_for(
      n,
      [&](std::size_t i) {
        try {
          const FlightSetup flight = prepare_flight(config, i);
          const EnsembleWithTruth w = flight_weather(config, flight);
          const PlanningContext ctx{flight.lattice, config.aircraft, config.ci, config.departure_h};
          const double truth_payload = true_payload(config, flight);

          StochasticConfig fixed_cfg;
          fixed_cfg.payload_samples = 1;
          fixed_cfg.workers = 1;
          StochasticConfig uncertain_cfg = fixed_cfg;
          uncertain_cfg.payload_samples = config.payload_samples;

          const auto fixed = run_stochastic_plan(ctx, w.ensemble, config.payload, fixed_cfg);
          const auto uncertain = run_stochastic_plan(ctx, w.ensemble, config.payload, uncertain_cfg);
          const Nowcast nowcast(w);
          PairedRow row = paired_row(
              flight.flight_id, flight.pair.origin.code + "_" + flight.pair.destination.code,
              evaluate_truth(ctx, fixed.selection.selected_route, nowcast, truth_payload).fuel,
              evaluate_truth(ctx, uncertain.selection.selected_route, nowcast, truth_payload).fuel, truth_payload);
          row.routes_differ = !(fixed.selection.selected_route == uncertain.selection.selected_route);
          rows[i] = row;
        } catch (const Error& e) {
          errors[i] = e.what();
        }
      },
      config.workers);

  std::vector<PairedRow> ok;
  std::vector<FlightFailure> failures;
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i]) ok.push_back(*rows[i]);
    else failures.push_back({prepare_flight(config, i).flight_id, errors[i]});
  }
  std::sort(ok.begin(), ok.end(), [](const PairedRow& a, const PairedRow& b) { return a.flight_id < b.flight_id; });
  auto r = summarize_paired(std::move(ok));
  r.failures = std::move(failures);
  r.n_failed = r.failures.size();
  return r;
}

nlohmann::json to_json(const PairedStudyReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"flight_id", row.flight_id},
                    {"od", row.od},
                    {"fixed_payload_fuel", row.fixed_fuel},
                    {"uncertain_payload_fuel", row.uncertain_fuel},
                    {"difference", row.difference},
                    {"true_payload", row.true_payload},
                    {"routes_differ", row.routes_differ}});
  }
  nlohmann::json t = nullptr;
  if (r.ttest) {
    t = {{"n", r.ttest->n},
         {"mean_difference", r.ttest->mean_difference},
         {"sd_difference", r.ttest->sd_difference},
         {"t", r.ttest->t},
         {"df", r.ttest->df},
         {"p_two_sided", r.ttest->p_two_sided}};
  }
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : r.failures) failures.push_back({{"flight_id", f.flight_id}, {"reason", f.reason}});
  return {{"rows", rows},
          {"n_failed", r.n_failed},
          {"failures", failures},
          {"mean_difference", r.mean_difference},
          {"weighted_mean_pct", r.weighted_mean_pct},
          {"ttest", t},
          {"ttest_note", r.ttest_note},
          {"positives", r.positives},
          {"negatives", r.negatives},
          {"zeros", r.zeros}};
}

std::string format_paired_table(const PairedStudyReport& r) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-16s %-10s %20s %24s %16s\n", "Flight", "O_D", "Fixed payload (kg)",
                "Uncertain payload (kg)", "Difference (kg)");
  os << buf;
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%-16s %-10s %20.2f %24.2f %16.2f\n", row.flight_id.c_str(), row.od.c_str(),
                  row.fixed_fuel, row.uncertain_fuel, row.difference);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "Mean difference: %.2f kg   Weighted mean: %.4f%%\n", r.mean_difference,
                r.weighted_mean_pct);
  os << buf;
  std::snprintf(buf, sizeof buf, "Positive: %zu  Negative: %zu  Zero: %zu\n", r.positives, r.negatives, r.zeros);
  os << buf;
  if (r.ttest) {
    std::snprintf(buf, sizeof buf, "T-test: t = %.4f, df = %.0f, p-value = %.3f\n", r.ttest->t, r.ttest->df,
                  r.ttest->p_two_sided);
    os << buf;
  } else {
    os << "T-test: undefined (" << r.ttest_note << ")\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------

std::vector<predict::CostSample> generate_cost_dataset(const ExperimentConfig& config, bool nowcast_is_control) {
  config.validate();
  const std::size_t n = config.n_flights;
  std::vector<std::optional<predict::CostSample>> out(n);
  parallel_for(
      n,
      [&](std::size_t i) {
        const FlightSetup flight = prepare_flight(config, i);
        EnsembleWithTruth w = flight_weather(config, flight);
        if (nowcast_is_control) w.nowcast = w.ensemble.control;
        const PlanningContext ctx{flight.lattice, config.aircraft, config.ci, config.departure_h};
        const double payload = true_payload(config, flight);
        try {
          const FlightPlan det = optimize(ctx, w.ensemble.control, payload);
          predict::CostSample s;
          s.flight_id = flight.flight_id;
          s.c_det = det.cost;
          s.c_actual = evaluate_truth(ctx, det.route, Nowcast(w), payload).cost;
          for (const auto& m : w.ensemble.members) s.c_members.push_back(recost_route(ctx, det.route, m, payload).cost);
          out[i] = std::move(s);
        } catch (const Infeasible&) {
        }
      },
      config.workers);
  std::vector<predict::CostSample> data;
  for (auto& s : out)
    if (s) data.push_back(std::move(*s));
  return data;
}

}  // namespace ensplan::harness
