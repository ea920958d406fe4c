// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Tolerances are fixed here and not configurable.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ensplan/harness.hpp"
#include "ensplan/predict.hpp"
#include "ensplan/stats.hpp"
#include "ensplan/stochastic.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace ensplan;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kRouterTol = 1e-6;        // kg
constexpr double kRouterBudget = 60.0;     // s
constexpr double kQuantileTol = 1e-4;      // in units of sigma
constexpr double kTTestTol = 1e-6;
constexpr double kDirectionalShare = 0.90;
constexpr double kDirectionalBudget = 600.0;  // s

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Outcome router_oracle() {
  const auto t0 = Clock::now();
  const auto c = oracle::run_router_campaign(500, 20240611, 200);
  const double secs = seconds_since(t0);
  std::ostringstream os;
  os << c.instances << " instances (" << c.infeasible << " infeasible), max " << c.max_combos
     << " combos, cost mismatches " << c.cost_mismatches << ", pruning mismatches " << c.pruning_mismatches
     << ", max |diff| " << fmt("%.2e", c.max_abs_diff) << " kg, " << fmt("%.1f", secs) << " s";
  if (!c.failures.empty()) os << "; first failure: " << c.failures.front();
  const bool ok = c.instances >= 500 && c.cost_mismatches == 0 && c.pruning_mismatches == 0 &&
                  c.max_combos <= 200 && c.max_abs_diff <= kRouterTol && secs < kRouterBudget && c.failures.empty();
  return {ok, os.str()};
}

Outcome selector_oracles() {
  std::mt19937_64 rng(1000);
  std::uniform_real_distribution<double> U(5000, 6000);
  std::uniform_int_distribution<int> I(10, 14);
  std::size_t agree = 0, total = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    // Every other matrix is integer valued so that ties actually occur.
    const bool integer = trial % 2 == 0;
    std::vector<Route> routes;
    for (int i = 0; i < 5; ++i) routes.push_back(Route::from_ids({"W00-00", "W01-0" + std::to_string(i), "W02-00"}));
    std::shuffle(routes.begin(), routes.end(), rng);
    std::vector<std::string> tags, keys;
    for (std::size_t j = 0; j < 8; ++j) tags.push_back(weather_tag(j) + "/p1");
    for (const auto& r : routes) keys.push_back(r.key);
    auto draw = [&] {
      std::vector<std::vector<double>> m(5, std::vector<double>(8));
      for (auto& row : m)
        for (auto& x : row) x = integer ? I(rng) : U(rng);
      return m;
    };
    const auto cost = draw(), fuel = draw();
    const auto m = make_cost_matrix(routes, tags, cost, fuel);
    agree += select_expected(m).selected_index == oracle::argmin_row_mean(cost, keys);
    agree += select_minimax(m).selected_index == oracle::argmin_row_max(fuel, keys);
    total += 2;
  }
  return {agree == total, std::to_string(agree) + "/" + std::to_string(total) + " selections agree"};
}

Outcome payload_quantiles() {
  const double s = payload_sigma(21, 100);
  double worst = 0.0;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> mean(1000, 40000), sd(1, 4000);
  for (int trial = 0; trial < 200; ++trial) {
    const auto d = PayloadDistribution::explicit_sigma(mean(rng), sd(rng));
    const auto r = payload_representatives(d, 5);
    for (std::size_t m = 1; m <= 5; ++m) {
      const double z = oracle::normal_quantile((2.0 * m - 1.0) / 10.0);
      worst = std::max(worst, std::abs(r[m - 1] - (d.mean + d.sigma_total * z)) / d.sigma_total);
    }
  }
  return {s == 210.0 && worst <= kQuantileTol,
          "payload_sigma(21,100) = " + fmt("%.6f", s) + ", k=5 max error " + fmt("%.2e", worst) + " sigma"};
}

void zero_noise(SyntheticWeatherSpec& s) {
  s.perturbation_sigma = s.nowcast_sigma = s.control_sigma = 0.0;
  s.jet_shift_sigma_deg = s.nowcast_jet_shift_sigma_deg = s.control_jet_shift_sigma_deg = 0.0;
}

Outcome collapse() {
  harness::ExperimentConfig c;
  c.n_flights = 24;
  zero_noise(c.weather);

  // Direct: the stochastic plan of a calm flight is the control plan.
  std::size_t same_plan = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto f = harness::prepare_flight(c, i);
    const auto w = harness::flight_weather(c, f);
    const PlanningContext ctx{f.lattice, c.aircraft, c.ci, c.departure_h};
    const auto run = run_stochastic_plan(ctx, w.ensemble, PayloadDistribution::explicit_sigma(c.payload.mean, 0.0), {});
    const auto det = optimize(ctx, w.ensemble.control, c.payload.mean);
    bool same = run.first.candidates.size() == 1 && run.selection.selected_route == det.route;
    for (double x : run.matrix.cost[0]) same = same && x == det.cost;
    same_plan += same;
  }

  const auto r = harness::run_comparison(c);
  std::size_t identical = 0;
  for (const auto& f : r.flights) identical += f.det_route == f.stoch_route && f.fuel_saving == 0.0;
  std::ostringstream os;
  os << same_plan << "/4 direct plans identical; report " << r.ties << "/" << r.n_flights << " ties, "
     << r.n_failed << " failed, " << identical << " identical routes";
  const bool ok = same_plan == 4 && r.n_failed == 0 && r.ties == r.n_flights && r.n_flights == c.n_flights &&
                  identical == r.n_flights;
  return {ok, os.str()};
}

Outcome directional() {
  harness::ExperimentConfig c;  // 200 flights, seed 7
  const auto t0 = Clock::now();
  const auto r = harness::run_comparison(c);
  const double secs = seconds_since(t0);
  std::ostringstream os;
  os << r.n_flights << " flights, " << r.n_failed << " failed; stoch " << r.stoch_wins << ", tie " << r.ties
     << ", det " << r.det_wins << "; win-or-tie " << fmt("%.1f", 100.0 * r.frac_win_or_tie) << "%, mean saving "
     << harness::format_kg(r.mean_fuel_saving) << ", " << fmt("%.0f", secs) << " s";
  const bool ok = r.n_flights == 200 && r.frac_win_or_tie >= kDirectionalShare && r.det_wins < r.stoch_wins &&
                  secs < kDirectionalBudget;
  return {ok, os.str()};
}

Outcome accounting() {
  harness::ExperimentConfig c;
  c.weather.n_members = 20;
  const auto f = harness::prepare_flight(c, 0);
  const auto w = harness::flight_weather(c, f);
  const PlanningContext ctx{f.lattice, c.aircraft, c.ci, c.departure_h};
  StochasticConfig sc;
  const auto a = run_stochastic_plan(ctx, w.ensemble, c.payload, sc).audit;
  sc.payload_samples = 5;
  sc.second_pass_include_control = true;
  const auto run = run_stochastic_plan(ctx, w.ensemble, c.payload, sc);
  const auto& b = run.audit;
  std::ostringstream os;
  os << "weather: first " << a.first_pass_runs << ", second nominal " << a.nominal_second_pass_cells << " (actual "
     << a.second_pass_cells << "), total nominal " << a.nominal_total_runs << "; payload: first " << b.first_pass_runs
     << ", second nominal " << b.nominal_second_pass_cells << " (actual " << b.second_pass_cells << ")";
  const bool ok = a.first_pass_runs == 21 && a.nominal_second_pass_cells == 420 && a.nominal_total_runs == 441 &&
                  a.second_pass_cells == a.unique_candidates * 20 && b.first_pass_runs == 105 &&
                  b.nominal_second_pass_cells == 11025 && b.second_pass_cells <= 11025 &&
                  b.second_pass_cells == run.matrix.n_candidates() * run.matrix.n_scenarios();
  return {ok, os.str()};
}

Outcome t_test() {
  const std::vector<double> hand{1, 2, 3, 4, 5};
  const auto h = stats::paired_t_test(hand);
  double worst = 0.0;
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    std::normal_distribution<double> N(std::uniform_real_distribution<double>(-2, 2)(rng), 1.0 + trial % 5);
    std::vector<double> d(3 + trial % 40);
    for (auto& x : d) x = N(rng);
    double t_ref = 0.0;
    const double p_ref = oracle::t_test_p(d, &t_ref);
    const auto r = stats::paired_t_test(d);
    worst = std::max({worst, std::abs(r.p_two_sided - p_ref), std::abs(r.t - t_ref) / std::max(1.0, std::abs(t_ref))});
  }
  std::ostringstream os;
  os << "{1..5}: t = " << fmt("%.4f", h.t) << ", p = " << fmt("%.4f", h.p_two_sided) << "; 100 vectors max error "
     << fmt("%.2e", worst);
  const bool ok = std::abs(h.t - 4.2426) < 5e-5 && std::abs(h.p_two_sided - 0.0132) < 5e-5 && worst <= kTTestTol;
  return {ok, os.str()};
}

Outcome predict_directional() {
  std::ostringstream os;
  bool ok = true;
  for (std::uint64_t seed : {1, 2, 3}) {
    harness::ExperimentConfig c;
    c.seed = seed;
    const auto data = harness::generate_cost_dataset(c);
    const auto specs = predict::default_regressor_specs(seed);
    const auto rep = predict::cross_validate(data, specs, 10, seed);
    double best_s = INFINITY, base_d = INFINITY;
    for (const auto& res : rep.results) {
      if (res.spec.inputs == predict::InputSet::S) best_s = std::min(best_s, res.mae);
      if (res.spec.inputs == predict::InputSet::D && res.spec.family == predict::Family::MeanBaseline) base_d = res.mae;
    }
    ok = ok && best_s <= base_d;
    os << (seed == 1 ? "" : "; ") << "seed " << seed << ": best S " << fmt("%.1f", best_s) << " vs baseline D "
       << fmt("%.1f", base_d);
  }
  return {ok, os.str()};
}

std::map<std::string, std::string> tree(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string bytes = fixture::read_file(e.path());
    if (e.path().filename() == "manifest.json") {
      auto j = nlohmann::json::parse(bytes);
      j.erase("created_at");
      bytes = j.dump();
    }
    out[std::filesystem::relative(e.path(), dir).string()] = bytes;
  }
  return out;
}

Outcome determinism() {
  fixture::TempDir dir("acceptance_det");
  fixture::write_file(dir / "flight.toml", fixture::small_flight_toml());
  fixture::write_file(dir / "exp.toml",
                      "[experiment]\nn_flights = 6\npayload_samples = 3\n[lattice]\nn_layers = 2\nn_offsets = 3\n"
                      "[weather]\nn_members = 4\n[predict]\nfolds = 3\n");
  const std::string sched = (std::filesystem::path(ENSPLAN_SOURCE_DIR) / "configs" / "schedule.toml").string();
  const std::vector<std::pair<std::string, std::string>> cmds{
      {"gen-weather", (dir / "flight.toml").string()}, {"plan", (dir / "flight.toml").string()},
      {"splan", (dir / "flight.toml").string()},       {"compare", (dir / "exp.toml").string()},
      {"payload-study", (dir / "exp.toml").string()},  {"predict-cv", (dir / "exp.toml").string()},
      {"schedule", sched}};
  std::size_t same = 0;
  std::string bad;
  for (const auto& [cmd, cfg] : cmds) {
    const auto a = fixture::run({cmd, "-c", cfg, "-o", (dir / ("a-" + cmd)).string(), "--seed", "11"});
    const auto b = fixture::run({cmd, "-c", cfg, "-o", (dir / ("b-" + cmd)).string(), "--seed", "11"});
    const bool ok = a.code == 0 && b.code == 0 && tree(fixture::run_dir(a)) == tree(fixture::run_dir(b));
    same += ok;
    if (!ok) bad += " " + cmd;
  }
  std::string detail = std::to_string(same) + "/" + std::to_string(cmds.size()) + " subcommands byte-identical";
  if (!bad.empty()) detail += "; differing:" + bad;
  return {same == cmds.size(), detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"router oracle", router_oracle},
      {"selector oracles", selector_oracles},
      {"payload sigma and quantile representatives", payload_quantiles},
      {"zero-perturbation collapse", collapse},
      {"directional comparison", directional},
      {"accounting identities", accounting},
      {"paired t-test", t_test},
      {"predict: S inputs vs D mean baseline", predict_directional},
      {"determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
