#include <doctest.h>

#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ensplan/run_store.hpp"
#include "ensplan/service.hpp"
#include "ensplan/stochastic.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace ensplan;
using nlohmann::json;

namespace {

// A candidate with the lowest mean cost but the worst fuel tail, one with a
// flat profile, and one that is worse on both.
std::string write_tail_fixture(const std::filesystem::path& root) {
  std::vector<Route> r;
  for (const char* mid : {"W01-00", "W01-01", "W01-02"}) r.push_back(Route::from_ids({"W00-01", mid, "W02-01"}));
  const std::vector<std::vector<double>> v{{100, 100, 100, 170}, {125, 125, 125, 125}, {130, 130, 135, 140}};
  const auto m = make_cost_matrix(r, {"m01/p1", "m02/p1", "m03/p1", "m04/p1"}, v, v);
  RunWriter w(root, "splan", {{"fixture", "fuel-tail"}});
  w.add_json("matrix.json", to_json(m));
  w.add_json("selection.json", to_json(select_expected(m)));
  w.add_json("candidates.json", {{"scenarios", m.scenario_tags}, {"candidates", json::array()}});
  w.commit();
  return w.run_id();
}

struct LiveServer {
  explicit LiveServer(const std::filesystem::path& root) : server(root, {"127.0.0.1", 0}) {
    port = server.bind();
    thread = std::thread([this] { server.listen(); });
    server.wait_until_ready();
  }
  ~LiveServer() {
    server.stop();
    thread.join();
  }
  service::Server server;
  int port = 0;
  std::thread thread;
};

}  // namespace

TEST_CASE("HTTP endpoints over a stored stochastic run") {
  fixture::TempDir dir("service");
  fixture::write_file(dir / "flight.toml", fixture::small_flight_toml());
  const auto store = dir / "runs";
  const auto made = fixture::run({"splan", "-c", (dir / "flight.toml").string(), "-o", store.string()});
  REQUIRE(made.code == 0);
  const std::string run_id = fixture::run_dir(made).filename().string();
  const std::string tail_id = write_tail_fixture(store);

  LiveServer live(store);
  httplib::Client cli("127.0.0.1", live.port);
  cli.set_connection_timeout(5);

  SUBCASE("list runs") {
    auto res = cli.Get("/api/runs");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");
    const auto j = json::parse(res->body);
    CHECK(j["runs"].size() == 2);
  }

  SUBCASE("run detail and candidates") {
    auto res = cli.Get(("/api/runs/" + run_id).c_str());
    REQUIRE(res);
    CHECK(res->status == 200);
    const auto j = json::parse(res->body);
    CHECK(j["run_id"] == run_id);
    CHECK(j.contains("selection"));

    res = cli.Get(("/api/runs/" + run_id + "/candidates").c_str());
    REQUIRE(res);
    CHECK(res->status == 200);
    const auto c = json::parse(res->body);
    const auto matrix = json::parse(RunStore(store).read_artifact(run_id, "matrix.json"));
    REQUIRE(c["candidates"].size() == matrix["candidates"].size());
    for (std::size_t i = 0; i < c["candidates"].size(); ++i) {
      const auto& cand = c["candidates"][i];
      CHECK(cand["fuel"] == matrix["fuel"][i]);
      CHECK(cand["polyline"].size() == cand["waypoints"].size());
      std::vector<double> fuel = cand["fuel"].get<std::vector<double>>();
      std::sort(fuel.begin(), fuel.end());
      CHECK(cand["fuel_stats"]["min"] == fuel.front());
      CHECK(cand["fuel_stats"]["max"] == fuel.back());
    }
  }

  SUBCASE("select with no exclusions equals the stored selection") {
    auto res = cli.Post(("/api/runs/" + run_id + "/select").c_str(), R"({"criterion":"expected"})", "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    const auto stored = json::parse(RunStore(store).read_artifact(run_id, "selection.json"));
    CHECK(json::parse(res->body) == stored);
    // Pure: asking again gives the same bytes.
    auto again = cli.Post(("/api/runs/" + run_id + "/select").c_str(), R"({"criterion":"expected"})", "application/json");
    CHECK(again->body == res->body);
  }

  SUBCASE("excluding the winner gives the runner-up by mean") {
    for (const auto& id : {run_id, tail_id}) {
      const auto m = cost_matrix_from_json(json::parse(RunStore(store).read_artifact(id, "matrix.json")));
      if (m.n_candidates() < 2) continue;
      const std::size_t win = select_expected(m).selected_index;
      std::vector<std::vector<double>> rest;
      std::vector<std::string> keys;
      std::vector<std::size_t> back;
      for (std::size_t i = 0; i < m.n_candidates(); ++i) {
        if (i == win) continue;
        rest.push_back(m.cost[i]);
        keys.push_back(m.candidates[i].key);
        back.push_back(i);
      }
      const std::size_t expect = back[oracle::argmin_row_mean(rest, keys)];
      const std::string body = R"({"criterion":"expected","excluded":[)" + std::to_string(win) + "]}";
      auto res = cli.Post(("/api/runs/" + id + "/select").c_str(), body, "application/json");
      REQUIRE(res);
      CHECK(res->status == 200);
      CHECK(json::parse(res->body)["selected_index"] == expect);
    }
  }

  SUBCASE("minimax prefers the candidate with the lighter fuel tail") {
    auto res = cli.Post(("/api/runs/" + tail_id + "/select").c_str(), R"({"criterion":"expected"})", "application/json");
    REQUIRE(res);
    CHECK(json::parse(res->body)["selected_index"] == 0);
    res = cli.Post(("/api/runs/" + tail_id + "/select").c_str(), R"({"criterion":"minimax"})", "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    const auto j = json::parse(res->body);
    CHECK(j["selected_index"] == 1);
    CHECK(j["criterion"] == "minimax");
  }

  SUBCASE("error statuses") {
    auto res = cli.Get("/api/runs/splan-000000000000");
    REQUIRE(res);
    CHECK(res->status == 404);
    res = cli.Get(("/api/runs/" + tail_id + "/nothing").c_str());
    CHECK(res->status == 404);
    res = cli.Post(("/api/runs/" + tail_id + "/select").c_str(), R"({"criterion":"expected","excluded":[0,1,2]})",
                   "application/json");
    CHECK(res->status == 422);
    res = cli.Post(("/api/runs/" + tail_id + "/select").c_str(), R"({"criterion":"expected","excluded":[9]})",
                   "application/json");
    CHECK(res->status == 400);
    res = cli.Post(("/api/runs/" + tail_id + "/select").c_str(), R"({"criterion":"median"})", "application/json");
    CHECK(res->status == 400);
    res = cli.Post(("/api/runs/" + tail_id + "/select").c_str(), "{not json", "application/json");
    CHECK(res->status == 400);
    res = cli.Post(("/api/runs/" + tail_id + "/select").c_str(), R"({"criterion":"expected","extra":1})", "application/json");
    CHECK(res->status == 400);
    res = cli.Post("/api/runs/splan-000000000000/select", R"({"criterion":"expected"})", "application/json");
    CHECK(res->status == 404);
    res = cli.Post("/api/runs", "{}", "application/json");
    CHECK(res->status == 405);
    CHECK(json::parse(res->body).contains("error"));
  }

  SUBCASE("CORS preflight") {
    auto res = cli.Options(("/api/runs/" + tail_id + "/select").c_str());
    REQUIRE(res);
    CHECK(res->status == 204);
    CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");
    CHECK(res->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);
  }
}

TEST_CASE("Api routes without a transport") {
  fixture::TempDir dir("api");
  const std::string id = write_tail_fixture(dir.path());
  service::Api api(dir.path());
  CHECK(api.handle("GET", "/api/runs", "").status == 200);
  CHECK(api.handle("GET", "/api/runs/..", "").status == 400);
  CHECK(api.handle("GET", "/elsewhere", "").status == 404);
  CHECK(api.handle("DELETE", "/api/runs/" + id, "").status == 405);
  // A tampered matrix is reported, not silently served.
  fixture::write_file(dir / id / "matrix.json", "{}");
  CHECK(api.post_select(id, R"({"criterion":"expected"})").status == 500);
}
