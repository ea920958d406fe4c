#include "ensplan/service.hpp"

#include <httplib.h>

#include <nlohmann/json.hpp>

#include "ensplan/error.hpp"
#include "ensplan/stochastic.hpp"

namespace ensplan::service {

using nlohmann::json;

namespace {

Response ok(const json& j) { return {200, j.dump()}; }
Response fail(int status, const std::string& message) { return {status, json{{"error", message}}.dump()}; }

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (start <= path.size()) {
    const auto pos = path.find('/', start);
    const auto end = pos == std::string::npos ? path.size() : pos;
    if (end > start) parts.push_back(path.substr(start, end - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return parts;
}

bool has_artifact(const RunManifest& m, const std::string& name) {
  for (const auto& a : m.artifacts)
    if (a.name == name) return true;
  return false;
}

}  // namespace

Api::Api(std::filesystem::path store_root) : store_(std::move(store_root)) {}

Response Api::get_runs() const {
  json arr = json::array();
  for (const auto& r : store_.list())
    arr.push_back({{"run_id", r.run_id}, {"command", r.command}, {"created_at", r.created_at}});
  return ok({{"runs", arr}});
}

Response Api::get_run(const std::string& run_id) const {
  const auto m = store_.manifest(run_id);
  if (!m) return fail(404, "unknown run '" + run_id + "'");
  json out = to_json(*m);
  try {
    if (has_artifact(*m, "selection.json"))
      out["selection"] = json::parse(store_.read_artifact(run_id, "selection.json"));
  } catch (const Error& e) {
    return fail(500, e.what());
  }
  return ok(out);
}

Response Api::get_candidates(const std::string& run_id) const {
  const auto m = store_.manifest(run_id);
  if (!m) return fail(404, "unknown run '" + run_id + "'");
  if (!has_artifact(*m, "candidates.json")) return fail(404, "run '" + run_id + "' has no candidates");
  try {
    json out = json::parse(store_.read_artifact(run_id, "candidates.json"));
    out["run_id"] = run_id;
    if (has_artifact(*m, "selection.json"))
      out["selection"] = json::parse(store_.read_artifact(run_id, "selection.json"));
    return ok(out);
  } catch (const Error& e) {
    return fail(500, e.what());
  }
}

Response Api::post_select(const std::string& run_id, const std::string& body) const {
  const auto m = store_.manifest(run_id);
  if (!m) return fail(404, "unknown run '" + run_id + "'");
  if (!has_artifact(*m, "matrix.json")) return fail(404, "run '" + run_id + "' has no cost matrix");

  Criterion criterion;
  std::vector<std::size_t> excluded;
  try {
    const json req = json::parse(body);
    if (!req.is_object()) return fail(400, "request body must be a JSON object");
    for (const auto& [k, v] : req.items())
      if (k != "criterion" && k != "excluded") return fail(400, "unknown field '" + k + "'");
    if (!req.contains("criterion") || !req["criterion"].is_string()) return fail(400, "criterion must be a string");
    criterion = parse_criterion(req["criterion"].get<std::string>());
    if (req.contains("excluded")) {
      if (!req["excluded"].is_array()) return fail(400, "excluded must be an array of candidate indices");
      for (const auto& e : req["excluded"]) {
        if (!e.is_number_unsigned()) return fail(400, "excluded must be an array of candidate indices");
        excluded.push_back(e.get<std::size_t>());
      }
    }
  } catch (const json::exception& e) {
    return fail(400, std::string("malformed request: ") + e.what());
  } catch (const Error& e) {
    return fail(400, e.what());
  }

  CostMatrix matrix;
  try {
    matrix = cost_matrix_from_json(json::parse(store_.read_artifact(run_id, "matrix.json")));
  } catch (const std::exception& e) {
    return fail(500, e.what());
  }
  for (auto e : excluded)
    if (e >= matrix.n_candidates())
      return fail(400, "excluded index " + std::to_string(e) + " out of range (" +
                           std::to_string(matrix.n_candidates()) + " candidates)");
  try {
    return ok(to_json(select(matrix, criterion, excluded)));
  } catch (const NothingToSelect& e) {
    return fail(422, e.what());
  }
}

Response Api::handle(const std::string& method, const std::string& path, const std::string& body) const {
  const auto parts = split_path(path);
  if (parts.size() < 2 || parts[0] != "api" || parts[1] != "runs") return fail(404, "no route for " + path);
  if (parts.size() == 2) {
    if (method != "GET") return fail(405, "method not allowed");
    return get_runs();
  }
  const std::string& id = parts[2];
  if (!valid_run_id(id)) return fail(400, "invalid run id");
  if (parts.size() == 3) {
    if (method != "GET") return fail(405, "method not allowed");
    return get_run(id);
  }
  if (parts.size() == 4 && parts[3] == "candidates") {
    if (method != "GET") return fail(405, "method not allowed");
    return get_candidates(id);
  }
  if (parts.size() == 4 && parts[3] == "select") {
    if (method != "POST") return fail(405, "method not allowed");
    return post_select(id, body);
  }
  return fail(404, "no route for " + path);
}

struct Server::Impl {
  Api api;
  ServeOptions options;
  httplib::Server http;
  int port = -1;

  Impl(std::filesystem::path root, ServeOptions o) : api(std::move(root)), options(std::move(o)) {}
};

Server::Server(std::filesystem::path store_root, ServeOptions options)
    : impl_(std::make_unique<Impl>(std::move(store_root), std::move(options))) {
  auto& http = impl_->http;
  const Api* api = &impl_->api;
  http.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                            {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                            {"Access-Control-Allow-Headers", "Content-Type"}});
  auto dispatch = [api](const httplib::Request& req, httplib::Response& res) {
    const Response r = api->handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  http.Get(R"(/api/.*)", dispatch);
  http.Post(R"(/api/.*)", dispatch);
  http.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
}

Server::~Server() = default;

int Server::bind() {
  auto& o = impl_->options;
  impl_->port = o.port == 0 ? impl_->http.bind_to_any_port(o.host) : (impl_->http.bind_to_port(o.host, o.port) ? o.port : -1);
  if (impl_->port < 0) throw IoError("cannot bind " + o.host + ":" + std::to_string(o.port));
  return impl_->port;
}

void Server::listen() {
  if (impl_->port < 0) bind();
  impl_->http.listen_after_bind();
}

void Server::wait_until_ready() const { impl_->http.wait_until_ready(); }

void Server::stop() { impl_->http.stop(); }

}  // namespace ensplan::service
