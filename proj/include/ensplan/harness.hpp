#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ensplan/predict.hpp"
#include "ensplan/router.hpp"
#include "ensplan/stats.hpp"
#include "ensplan/stochastic.hpp"
#include "ensplan/weather.hpp"

namespace ensplan::harness {

struct CityPair {
  Airport origin;
  Airport destination;
};

/// Twelve transatlantic round trips (24 directed legs).
std::vector<CityPair> default_city_pairs();

/// Per-flight weather domain: lattice bounding box plus a margin.
struct GridConfig {
  double step_deg = 1.0;
  double margin_deg = 2.0;
  std::vector<double> levels_hpa = default_levels_hpa();
  double time_step_h = 6.0;
};

struct ExperimentConfig {
  std::vector<CityPair> city_pairs = default_city_pairs();
  std::size_t n_flights = 200;
  std::uint64_t seed = 7;
  double departure_h = 3.0;  // after issuance
  SyntheticWeatherSpec weather{};
  GridConfig grid{};
  LatticeConfig lattice{};
  AircraftModel aircraft = bundled_aircraft("widebody");
  CostIndex ci{};
  PayloadDistribution payload = PayloadDistribution::explicit_sigma(30000.0, 2000.0);
  double tie_tolerance_kg = 0.5;
  std::size_t histogram_bins = 20;
  std::size_t payload_samples = 5;   // k for the uncertain arm of the payload study
  std::size_t workers = 0;

  void validate() const;
};

/// Flight i flies city_pairs[i % n] with its own seed.
struct FlightSetup {
  std::string flight_id;  // "F0007-JFK-LHR"
  std::size_t index = 0;
  CityPair pair;
  std::uint64_t seed = 0;
  Lattice lattice;
  GridAxes axes;
};

FlightSetup prepare_flight(const ExperimentConfig& config, std::size_t index);
GridAxes flight_axes(const ExperimentConfig& config, const Lattice& lattice);

/// Lattice bounding box plus margin, from issuance to one hour past arrival
/// at the slowest cruise speed among `min_tas_mps`.
GridAxes domain_axes(const GridConfig& grid, const Lattice& lattice, double min_tas_mps, double departure_h);
EnsembleWithTruth flight_weather(const ExperimentConfig& config, const FlightSetup& flight);

/// The only grid a truth evaluation accepts. Construct from the generated
/// nowcast; a forecast grid cannot be passed by accident.
class Nowcast {
 public:
  explicit Nowcast(const EnsembleWithTruth& w) : grid_(&w.nowcast) {}
  const WeatherGrid& grid() const { return *grid_; }

 private:
  const WeatherGrid* grid_;
};

struct TruthCost {
  double fuel = 0.0;
  double time = 0.0;
  double cost = 0.0;
};

TruthCost evaluate_truth(const PlanningContext& ctx, const Route& route, const Nowcast& nowcast, double payload);

enum class Outcome { StochWins, DetWins, Tie };
std::string to_string(Outcome o);

/// Fuel comparison: saving = stoch - det, negative means the stochastic
/// route burns less.
Outcome classify(double fuel_saving, double tie_tolerance_kg);

struct FlightComparison {
  std::string flight_id;
  Route det_route;
  Route stoch_route;
  TruthCost det_truth;
  TruthCost stoch_truth;
  double fuel_saving = 0.0;  // kg
  double time_saving = 0.0;  // min
  double cost_saving = 0.0;  // kg-equivalent
  Outcome outcome = Outcome::Tie;
  std::size_t unique_candidates = 0;
};

struct FlightFailure {
  std::string flight_id;
  std::string reason;
};

/// Optimiser calls summed over flights.
struct RunAccounting {
  std::size_t first_pass_runs = 0;
  std::size_t second_pass_cells = 0;
  std::size_t truth_evaluations = 0;       // nowcast recosts of every candidate
  std::size_t deterministic_recosts = 0;   // control plan recost, one per flight
  std::size_t total_runs = 0;
};

struct ComparisonReport {
  std::size_t n_flights = 0;
  std::size_t n_failed = 0;
  std::vector<FlightFailure> failures;
  std::size_t stoch_wins = 0, det_wins = 0, ties = 0;
  double frac_stoch_wins = 0.0, frac_det_wins = 0.0, frac_ties = 0.0;
  double frac_win_or_tie = 0.0;
  double mean_fuel_saving = 0.0;  // kg
  double mean_time_saving = 0.0;  // min
  double mean_cost_saving = 0.0;
  stats::Histogram fuel_histogram;
  stats::Histogram time_histogram;
  std::vector<FlightComparison> flights;
  RunAccounting accounting;
  double tie_tolerance_kg = 0.5;
};

FlightComparison compare_flight(const ExperimentConfig& config, std::size_t index, RunAccounting* accounting);
ComparisonReport run_comparison(const ExperimentConfig& config);

/// Density histogram of savings.
stats::Histogram savings_histogram(const std::vector<double>& values, std::size_t n_bins);

/// "%.1f kg"
std::string format_kg(double v);

nlohmann::json to_json(const ComparisonReport& r);
std::string format_report(const ComparisonReport& r);
std::string histogram_csv(const stats::Histogram& h);

// ---------------------------------------------------------------------------
// Payload study

struct PairedRow {
  std::string flight_id;
  std::string od;  // "JFK_LHR"
  double fixed_fuel = 0.0;      // k = 1, recosted at the true payload
  double uncertain_fuel = 0.0;  // k = config.payload_samples
  double difference = 0.0;      // fixed - uncertain
  double true_payload = 0.0;
  bool routes_differ = false;
};

struct PairedStudyReport {
  std::vector<PairedRow> rows;
  std::size_t n_failed = 0;
  std::vector<FlightFailure> failures;
  double mean_difference = 0.0;
  double weighted_mean_pct = 0.0;  // sum(diff) / sum(fixed) * 100
  std::optional<stats::PairedTTest> ttest;
  std::string ttest_note;  // set when the test is undefined
  std::size_t positives = 0, negatives = 0, zeros = 0;
};

/// Row with difference = fixed - uncertain; positive means carrying the
/// payload uncertainty saved fuel.
PairedRow paired_row(std::string flight_id, std::string od, double fixed_fuel, double uncertain_fuel,
                     double true_payload = 0.0);

/// Summary statistics over the given rows; the t-test uses exactly these
/// differences.
PairedStudyReport summarize_paired(std::vector<PairedRow> rows);

double true_payload(const ExperimentConfig& config, const FlightSetup& flight);
PairedStudyReport run_payload_study(const ExperimentConfig& config);

nlohmann::json to_json(const PairedStudyReport& r);
std::string format_paired_table(const PairedStudyReport& r);

// ---------------------------------------------------------------------------
// Cost datasets for the predict module

/// One CostSample per flight: the control-optimal plan's cost under the
/// nowcast (C_A), the control (C_D) and each member (C_S). Each flight draws
/// its payload from config.payload so costs vary across the dataset. With
/// `nowcast_is_control` the nowcast is replaced by the control grid.
std::vector<predict::CostSample> generate_cost_dataset(const ExperimentConfig& config, bool nowcast_is_control = false);

}  // namespace ensplan::harness
