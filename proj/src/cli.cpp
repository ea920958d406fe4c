#include "ensplan/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "ensplan/config.hpp"
#include "ensplan/error.hpp"
#include "ensplan/harness.hpp"
#include "ensplan/predict.hpp"
#include "ensplan/run_store.hpp"
#include "ensplan/schedule.hpp"
#include "ensplan/service.hpp"
#include "ensplan/stats.hpp"
#include "ensplan/stochastic.hpp"

namespace ensplan::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
};

json load_doc(const std::string& path) {
  if (path.empty()) return json::object();
  const fs::path p(path);
  if (p.extension() == ".json") {
    std::ifstream f(p);
    if (!f) throw ConfigError("cannot read config " + path);
    try {
      return json::parse(f);
    } catch (const json::parse_error& e) {
      throw ConfigError(path + ": " + e.what());
    }
  }
  return load_toml(p);
}

fs::path base_dir(const std::string& path) { return path.empty() ? fs::path{} : fs::path(path).parent_path(); }

fs::path store_root(const Common& c) { return c.out.empty() ? default_store_root() : fs::path(c.out); }

void add_common(CLI::App* sub, Common& c, bool seed = true) {
  sub->add_option("-c,--config", c.config, "TOML config file (.json also accepted)");
  sub->add_option("-o,--out", c.out, "run store root (default: $ENSPLAN_RUNS or ./runs)");
  if (seed) sub->add_option("--seed", c.seed, "override the root seed");
  sub->add_option("--workers", c.workers, "worker threads (0 = all cores); results do not depend on it");
}

std::string bytes_of(const std::vector<std::uint8_t>& v) { return std::string(v.begin(), v.end()); }

json grid_sidecar(const std::string& issuance, const std::string& role, std::optional<std::size_t> member) {
  nlohmann::ordered_json j;
  j["format"] = "WGRD1";
  j["issuance_time"] = issuance;
  j["role"] = role;
  j["member_index"] = member ? nlohmann::ordered_json(*member) : nlohmann::ordered_json(nullptr);
  return j;
}

// Lattice, grid axes and weather for a single configured flight.
struct FlightWorld {
  Lattice lattice;
  GridAxes axes;
  EnsembleWithTruth weather;
};

FlightWorld build_world(const FlightConfig& c) {
  Lattice lattice = build_lattice(c.origin.pos, c.destination.pos, c.lattice);
  double min_tas = 1e300;
  for (auto l : lattice.levels) min_tas = std::min(min_tas, c.aircraft.level(l).tas);
  GridAxes axes = harness::domain_axes(c.grid, lattice, min_tas, c.departure_h);
  EnsembleWithTruth weather = generate_ensemble(c.weather, axes);
  return {std::move(lattice), std::move(axes), std::move(weather)};
}

FlightConfig flight_config(const Common& common) {
  FlightConfig c = flight_config_from_json(load_doc(common.config), base_dir(common.config));
  if (common.seed) c.weather.seed = *common.seed;
  if (common.workers) c.workers = *common.workers;
  return c;
}

json plan_json(const FlightPlan& p, const Lattice& lattice) {
  json j = to_json(p);
  json poly = json::array();
  for (const auto& pt : route_polyline(lattice, p.route)) poly.push_back({pt.lat, pt.lon});
  j["polyline"] = poly;
  return j;
}

void print_run(std::ostream& out, const fs::path& dir) { out << "run: " << dir.string() << "\n"; }

// --- subcommands ----------------------------------------------------------

int cmd_gen_weather(const Common& common, std::ostream& out) {
  const FlightConfig c = flight_config(common);
  const FlightWorld w = build_world(c);
  json resolved = to_json(c);
  RunWriter run(store_root(common), "gen-weather", resolved);
  const auto& ens = w.weather.ensemble;
  run.add("weather/control.wgrd", bytes_of(encode_grid(ens.control)));
  run.add_json("weather/control.json", grid_sidecar(ens.issuance_time, "control", std::nullopt));
  for (std::size_t m = 0; m < ens.members.size(); ++m) {
    const std::string tag = weather_tag(m);
    run.add("weather/" + tag + ".wgrd", bytes_of(encode_grid(ens.members[m])));
    run.add_json("weather/" + tag + ".json", grid_sidecar(ens.issuance_time, "member", m));
  }
  run.add("weather/nowcast.wgrd", bytes_of(encode_grid(w.weather.nowcast)));
  run.add_json("weather/nowcast.json", grid_sidecar(ens.issuance_time, "nowcast", std::nullopt));
  run.add_json("axes.json", {{"lat", w.axes.lat}, {"lon", w.axes.lon}, {"level_hpa", w.axes.level}, {"time_h", w.axes.time}});
  const fs::path dir = run.commit();
  out << "grids: control, " << ens.members.size() << " members, nowcast; " << w.axes.lat.size() << "x"
      << w.axes.lon.size() << "x" << w.axes.level.size() << "x" << w.axes.time.size() << " points each\n";
  print_run(out, dir);
  return kOk;
}

int cmd_plan(const Common& common, std::ostream& out) {
  const FlightConfig c = flight_config(common);
  const FlightWorld w = build_world(c);
  const PlanningContext ctx{w.lattice, c.aircraft, c.ci, c.departure_h, {}};
  FlightPlan plan = optimize(ctx, w.weather.ensemble.control, c.payload.mean);
  plan.scenario_tag = weather_tag(std::nullopt);
  RunWriter run(store_root(common), "plan", to_json(c));
  run.add_json("plan.json", plan_json(plan, w.lattice));
  const fs::path dir = run.commit();
  char line[256];
  std::snprintf(line, sizeof line, "route %s\ntrip fuel %.1f kg, time %.1f min, cost %.1f kg\n", plan.route.key.c_str(),
                plan.trip_fuel, plan.trip_time, plan.cost);
  out << line;
  print_run(out, dir);
  return kOk;
}

json candidates_artifact(const StochasticRun& r, const Lattice& lattice) {
  const CostMatrix& m = r.matrix;
  json base = candidates_json(r.first, lattice);
  json arr = json::array();
  for (std::size_t i = 0; i < m.n_candidates(); ++i) {
    json c = base.at(i);
    json fuel = json::array();
    for (std::size_t j = 0; j < m.n_scenarios(); ++j)
      fuel.push_back(m.infeasible[i][j] && !m.infeasible_penalty ? json(nullptr) : json(m.fuel[i][j]));
    c["fuel"] = fuel;
    const auto counted = m.counted(i, m.fuel);
    if (counted.empty()) {
      c["fuel_stats"] = nullptr;
      c["mean_fuel"] = nullptr;
      c["mean_cost"] = nullptr;
    } else {
      const auto b = stats::box_stats(counted);
      c["fuel_stats"] = {{"min", b.min},
                         {"q1", b.q1},
                         {"median", b.median},
                         {"q3", b.q3},
                         {"max", b.max},
                         {"whisker_low", b.whisker_low},
                         {"whisker_high", b.whisker_high},
                         {"outliers", b.outliers}};
      c["mean_fuel"] = stats::order_free_sum(counted) / static_cast<double>(counted.size());
      c["mean_cost"] = m.column_means[i];
    }
    arr.push_back(std::move(c));
  }
  json j;
  j["scenarios"] = m.scenario_tags;
  j["candidates"] = arr;
  j["expected_index"] = select_expected(m).selected_index;
  j["minimax_index"] = select_minimax(m).selected_index;
  return j;
}

int cmd_splan(const Common& common, const std::optional<std::string>& criterion, std::ostream& out) {
  FlightConfig c = flight_config(common);
  if (criterion) {
    try {
      c.criterion = parse_criterion(*criterion);
    } catch (const Error& e) {
      throw ConfigError(std::string("--criterion: ") + e.what());
    }
  }
  const FlightWorld w = build_world(c);
  const PlanningContext ctx{w.lattice, c.aircraft, c.ci, c.departure_h, {}};
  StochasticConfig sc;
  sc.payload_samples = c.payload_samples;
  sc.second_pass_include_control = c.include_control;
  sc.criterion = c.criterion;
  sc.infeasible_penalty = c.infeasible_penalty;
  sc.workers = c.workers;
  const StochasticRun r = run_stochastic_plan(ctx, w.weather.ensemble, c.payload, sc);

  RunWriter run(store_root(common), "splan", to_json(c));
  run.add_json("selection.json", to_json(r.selection));
  run.add_json("matrix.json", to_json(r.matrix));
  run.add_json("candidates.json", candidates_artifact(r, w.lattice));
  run.add_json("audit.json", to_json(r.audit));
  run.add_json("payloads.json", r.payloads);
  // Filed plans use the control forecast at the mean payload.
  try {
    FlightPlan det = optimize(ctx, w.weather.ensemble.control, c.payload.mean);
    det.scenario_tag = weather_tag(std::nullopt);
    run.add_json("plans/deterministic.json", plan_json(det, w.lattice));
    FlightPlan sel = recost_route(ctx, r.selection.selected_route, w.weather.ensemble.control, c.payload.mean);
    sel.scenario_tag = weather_tag(std::nullopt);
    run.add_json("plans/selected.json", plan_json(sel, w.lattice));
  } catch (const Infeasible& e) {
    run.add_json("plans/warnings.json", json::array({e.what()}));
  }
  const fs::path dir = run.commit();

  const auto& st = r.selection.per_candidate_stats[r.selection.selected_index];
  char line[256];
  std::snprintf(line, sizeof line, "criterion %s: candidate %zu of %zu, %s %.1f kg\n", to_string(c.criterion).c_str(),
                r.selection.selected_index, r.matrix.n_candidates(),
                c.criterion == Criterion::Minimax ? "max fuel" : "mean cost", st ? (c.criterion == Criterion::Minimax ? st->max : st->mean) : 0.0);
  out << line << "route " << r.selection.selected_route.key << "\n";
  out << "optimiser runs: " << r.audit.first_pass_runs << " first pass + " << r.audit.second_pass_cells
      << " second pass = " << r.audit.total_runs << "\n";
  print_run(out, dir);
  return kOk;
}

harness::ExperimentConfig experiment_config(const Common& common, const std::optional<std::size_t>& flights) {
  auto c = experiment_from_json(load_doc(common.config), base_dir(common.config));
  if (flights) c.n_flights = *flights;
  if (common.seed) c.seed = *common.seed;
  if (common.workers) c.workers = *common.workers;
  try {
    c.validate();
  } catch (const InvalidSpec& e) {
    throw ConfigError(e.what());
  }
  return c;
}

int cmd_compare(const Common& common, const std::optional<std::size_t>& flights, std::ostream& out) {
  const auto c = experiment_config(common, flights);
  const auto report = harness::run_comparison(c);
  RunWriter run(store_root(common), "compare", to_json(c));
  const std::string text = harness::format_report(report);
  run.add_json("report.json", harness::to_json(report));
  run.add("report.txt", text);
  run.add("fuel_histogram.csv", harness::histogram_csv(report.fuel_histogram));
  run.add("time_histogram.csv", harness::histogram_csv(report.time_histogram));
  const fs::path dir = run.commit();
  out << text;
  print_run(out, dir);
  return kOk;
}

int cmd_payload_study(const Common& common, const std::optional<std::size_t>& flights, std::ostream& out) {
  const auto c = experiment_config(common, flights);
  const auto report = harness::run_payload_study(c);
  RunWriter run(store_root(common), "payload-study", to_json(c));
  const std::string text = harness::format_paired_table(report);
  run.add_json("study.json", harness::to_json(report));
  run.add("study.txt", text);
  const fs::path dir = run.commit();
  out << text;
  print_run(out, dir);
  return kOk;
}

int cmd_predict_cv(const Common& common, const std::optional<std::size_t>& flights, std::optional<std::size_t> folds,
                   std::ostream& out) {
  auto c = predict_config_from_json(load_doc(common.config), base_dir(common.config));
  if (flights) c.experiment.n_flights = *flights;
  if (common.seed) c.experiment.seed = c.cv_seed = *common.seed;
  if (common.workers) c.experiment.workers = *common.workers;
  if (folds) c.folds = *folds;
  if (c.folds < 2) throw ConfigError("--folds must be >= 2");

  const auto data = c.data ? predict::read_dataset_csv(*c.data) : harness::generate_cost_dataset(c.experiment, c.nowcast_is_control);
  const auto specs = predict::default_regressor_specs(c.cv_seed);
  const auto report = predict::cross_validate(data, specs, c.folds, c.cv_seed);
  RunWriter run(store_root(common), "predict-cv", to_json(c));
  const std::string text = predict::format_cv_table(report);
  run.add("dataset.csv", predict::dataset_csv(data));
  run.add_json("cv.json", predict::to_json(report));
  run.add("cv.txt", text);
  const fs::path dir = run.commit();
  out << text;
  print_run(out, dir);
  return kOk;
}

int cmd_schedule(const Common& common, std::ostream& out) {
  if (common.config.empty()) throw ConfigError("schedule needs --config");
  auto p = schedule::problem_from_json(load_doc(common.config));
  if (common.seed) p.seed = *common.seed;
  if (common.workers) p.workers = *common.workers;
  const auto ranking = schedule::rank_schedules(p);
  json resolved = load_doc(common.config);
  resolved["seed"] = p.seed;
  RunWriter run(store_root(common), "schedule", resolved);
  const std::string text = schedule::format_ranking(ranking, p);
  run.add_json("ranking.json", schedule::to_json(ranking, p));
  run.add("ranking.txt", text);
  const fs::path dir = run.commit();
  out << text;
  print_run(out, dir);
  return kOk;
}

int cmd_serve(const std::string& store, const std::string& host, int port, std::ostream& out) {
  const fs::path root = store.empty() ? default_store_root() : fs::path(store);
  service::Server server(root, {host, port});
  const int bound = server.bind();
  out << "serving " << root.string() << " on http://" << host << ":" << bound << "\n" << std::flush;
  server.listen();
  return kOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"ensplan: ensemble flight planning"};
  app.name("ensplan");
  app.require_subcommand(1);

  Common common;
  std::optional<std::string> criterion;
  std::optional<std::size_t> flights;
  std::optional<std::size_t> folds;
  std::string serve_store, serve_host = "127.0.0.1";
  int serve_port = 8080;

  auto* gen = app.add_subcommand("gen-weather", "Write the control, member and nowcast grids of one flight as WGRD1 files");
  add_common(gen, common);
  auto* plan = app.add_subcommand("plan", "Deterministic plan on the control forecast");
  add_common(plan, common);
  auto* splan = app.add_subcommand("splan", "Two-pass stochastic plan over the ensemble");
  add_common(splan, common);
  splan->add_option("--criterion", criterion, "expected | minimax");
  auto* compare = app.add_subcommand("compare", "Deterministic vs stochastic comparison over synthetic flights");
  add_common(compare, common);
  compare->add_option("--flights", flights, "number of flights");
  auto* study = app.add_subcommand("payload-study", "Fixed vs uncertain payload, paired over flights");
  add_common(study, common);
  study->add_option("--flights", flights, "number of flights");
  auto* pcv = app.add_subcommand("predict-cv", "Cross-validate actual-cost regressors");
  add_common(pcv, common);
  pcv->add_option("--flights", flights, "flights in the generated dataset");
  pcv->add_option("--folds", folds, "number of folds");
  auto* sched = app.add_subcommand("schedule", "Rank fleet assignments by expected profit over the ensemble");
  add_common(sched, common);
  auto* serve = app.add_subcommand("serve", "Serve the run store over HTTP");
  serve->add_option("--store", serve_store, "run store root (default: $ENSPLAN_RUNS or ./runs)");
  serve->add_option("--host", serve_host, "bind address");
  serve->add_option("--port", serve_port, "port (0 picks a free one)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_gen_weather(common, out);
    if (*plan) return cmd_plan(common, out);
    if (*splan) return cmd_splan(common, criterion, out);
    if (*compare) return cmd_compare(common, flights, out);
    if (*study) return cmd_payload_study(common, flights, out);
    if (*pcv) return cmd_predict_cv(common, flights, folds, out);
    if (*sched) return cmd_schedule(common, out);
    if (*serve) return cmd_serve(serve_store, serve_host, serve_port, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const InvalidSpec& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const Infeasible& e) {
    err << "infeasible: " << e.what() << "\n";
    return kInfeasible;
  } catch (const NoFeasibleSchedule& e) {
    err << "infeasible: " << e.what() << "\n";
    return kInfeasible;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace ensplan::cli
