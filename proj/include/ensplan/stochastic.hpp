#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ensplan/router.hpp"
#include "ensplan/weather.hpp"

namespace ensplan {

// ---------------------------------------------------------------------------
// Payload uncertainty

enum class PayloadMode { ExplicitSigma, DerivedFromPassengers, FractionOfMean };

struct PayloadDistribution {
  double mean = 0.0;         // kg
  double sigma_total = 0.0;  // kg
  std::optional<double> per_passenger_sigma;
  std::optional<double> n_passengers;
  PayloadMode mode = PayloadMode::ExplicitSigma;

  static PayloadDistribution explicit_sigma(double mean, double sigma);
  static PayloadDistribution from_passengers(double mean, double per_passenger_sigma, double n_passengers);
  static PayloadDistribution fraction_of_mean(double mean, double fraction = 0.05);
  void validate() const;
};

/// sqrt(sigma_p^2 * N_p): spread of the summed mass of N_p independent
/// passengers.
double payload_sigma(double per_passenger_sigma, double n_passengers);

/// k equiprobable values at the normal quantile midpoints (2m-1)/(2k),
/// ascending.
std::vector<double> payload_representatives(const PayloadDistribution& dist, std::size_t k = 5);

// ---------------------------------------------------------------------------
// Scenarios

struct Scenario {
  std::size_t weather = 0;
  std::size_t payload = 0;
  double weight = 0.0;
  std::string tag;  // "<weather tag>/p<payload index>"
};

/// Non-owning view of the weather grids; the ensemble must outlive it.
struct ScenarioSet {
  std::vector<const WeatherGrid*> weather;
  std::vector<std::string> weather_tags;
  std::vector<double> payloads;
  std::vector<Scenario> scenarios;
};

using ScenarioSampler = std::function<ScenarioSet(std::vector<const WeatherGrid*>, std::vector<std::string>,
                                                  std::vector<double>)>;

/// Every weather grid paired with every payload value, equal weights.
ScenarioSet full_factorial(std::vector<const WeatherGrid*> weather, std::vector<std::string> weather_tags,
                           std::vector<double> payloads);

/// "control", "m01", "m02", ...
std::string weather_tag(std::optional<std::size_t> member);

// ---------------------------------------------------------------------------
// Two-pass optimisation

struct Candidate {
  Route route;
  std::vector<std::string> produced_by;  // scenario tags, first-seen order
};

struct FirstPassResult {
  std::vector<Candidate> candidates;
  std::size_t runs = 0;
  std::size_t infeasible_runs = 0;
  std::vector<std::string> warnings;
};

/// One optimisation per (control + members) x payload, payload-major.
/// Routes are deduplicated by key in first-seen order. Infeasible runs are
/// dropped with a warning; Infeasible is thrown only if every run fails.
FirstPassResult first_pass(const PlanningContext& ctx, const EnsembleForecast& ensemble,
                           std::span<const double> payloads, std::size_t workers = 0);

struct CostMatrix {
  std::vector<Route> candidates;
  std::vector<std::string> scenario_tags;
  // [candidate][scenario]
  std::vector<std::vector<double>> cost;  // kg-equivalent
  std::vector<std::vector<double>> fuel;  // kg
  std::vector<std::vector<double>> time;  // min
  std::vector<std::vector<bool>> infeasible;
  std::optional<double> infeasible_penalty;  // big-M mode when set
  // Summaries, filled by finalize().
  std::vector<double> column_means;  // mean cost per candidate
  std::vector<double> column_max;    // max fuel per candidate
  std::vector<bool> all_infeasible;

  std::size_t n_candidates() const { return candidates.size(); }
  std::size_t n_scenarios() const { return scenario_tags.size(); }

  /// Cells that enter the statistics of a candidate: feasible ones, or all
  /// of them (at the penalty value) in big-M mode.
  std::vector<double> counted(std::size_t candidate, const std::vector<std::vector<double>>& values) const;

  /// Recomputes the summaries. Sums run over sorted values, so permuting
  /// scenarios leaves them bit-identical.
  void finalize();
};

CostMatrix make_cost_matrix(std::vector<Route> candidates, std::vector<std::string> scenario_tags,
                            std::vector<std::vector<double>> cost, std::vector<std::vector<double>> fuel,
                            std::vector<std::vector<double>> time = {},
                            std::vector<std::vector<bool>> infeasible = {});

struct SecondPassOptions {
  std::optional<double> infeasible_penalty;
  std::size_t workers = 0;
};

/// f[i][j] = recost of candidate i under scenario j.
CostMatrix second_pass(const PlanningContext& ctx, std::span<const Route> candidates,
                       const ScenarioSet& scenarios, const SecondPassOptions& options = {});

// ---------------------------------------------------------------------------
// Selection

enum class Criterion { ExpectedValue, Minimax };

std::string to_string(Criterion c);
Criterion parse_criterion(const std::string& s);  // "expected" | "minimax"

struct CandidateStats {
  double mean = 0.0;
  double max = 0.0;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  std::size_t cells = 0;
};

struct SelectionResult {
  std::size_t selected_index = 0;
  Route selected_route;
  Criterion criterion = Criterion::ExpectedValue;
  std::vector<std::size_t> excluded_indices;
  std::vector<std::optional<CandidateStats>> per_candidate_stats;  // on the criterion's array
};

/// argmin of mean cost; ties by route key. Throws NothingToSelect.
SelectionResult select_expected(const CostMatrix& m, std::span<const std::size_t> exclusions = {});

/// argmin of worst-case fuel; ties by route key. Throws NothingToSelect.
SelectionResult select_minimax(const CostMatrix& m, std::span<const std::size_t> exclusions = {});

SelectionResult select(const CostMatrix& m, Criterion c, std::span<const std::size_t> exclusions = {});

// ---------------------------------------------------------------------------
// End-to-end

struct StochasticConfig {
  std::size_t payload_samples = 1;           // 1 = weather-only
  bool second_pass_include_control = false;  // members only by default
  Criterion criterion = Criterion::ExpectedValue;
  std::optional<double> infeasible_penalty;
  ScenarioSampler sampler = full_factorial;
  std::size_t workers = 0;
};

/// Run counts in optimiser calls. "nominal" values are what the two passes
/// would cost without route deduplication.
struct Audit {
  std::size_t first_pass_runs = 0;
  std::size_t first_pass_infeasible = 0;
  std::size_t unique_candidates = 0;
  std::size_t dedup_savings = 0;
  std::size_t second_pass_scenarios = 0;
  std::size_t second_pass_cells = 0;
  std::size_t second_pass_infeasible_cells = 0;
  std::size_t nominal_second_pass_cells = 0;
  std::size_t total_runs = 0;
  std::size_t nominal_total_runs = 0;
  std::vector<std::string> warnings;
};

struct StochasticRun {
  std::vector<double> payloads;
  FirstPassResult first;
  CostMatrix matrix;
  SelectionResult selection;
  Audit audit;
};

StochasticRun run_stochastic_plan(const PlanningContext& ctx, const EnsembleForecast& ensemble,
                                  const PayloadDistribution& payload, const StochasticConfig& config);

// JSON views used for run artifacts and by the service.
nlohmann::json to_json(const CostMatrix& m);
CostMatrix cost_matrix_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SelectionResult& s);
nlohmann::json to_json(const Audit& a);
nlohmann::json candidates_json(const FirstPassResult& first, const Lattice& lattice);
nlohmann::json to_json(const PayloadDistribution& p);

}  // namespace ensplan
