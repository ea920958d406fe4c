#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "ensplan/run_store.hpp"

namespace ensplan::service {

struct Response {
  int status = 200;
  std::string body;  // JSON
};

/// Request handling over a run store, independent of the HTTP transport.
///
///   GET  /api/runs                      run summaries
///   GET  /api/runs/{id}                 manifest, plus the stored selection for splan runs
///   GET  /api/runs/{id}/candidates      per-candidate fuel vectors, box stats, polylines
///   POST /api/runs/{id}/select          {"criterion": ..., "excluded": [...]} -> SelectionResult
///
/// Errors are {"error": message} with 400 (bad request), 404 (unknown run
/// or artifact) or 422 (every candidate excluded).
class Api {
 public:
  explicit Api(std::filesystem::path store_root);

  Response get_runs() const;
  Response get_run(const std::string& run_id) const;
  Response get_candidates(const std::string& run_id) const;
  Response post_select(const std::string& run_id, const std::string& body) const;

  /// Routes a method and path (query string excluded) to the calls above.
  Response handle(const std::string& method, const std::string& path, const std::string& body) const;

 private:
  RunStore store_;
};

struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
};

/// Blocks until stop() is called from another thread.
class Server {
 public:
  Server(std::filesystem::path store_root, ServeOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds the socket; returns the bound port. Throws IoError.
  int bind();
  void listen();
  /// Returns once listen() is accepting connections.
  void wait_until_ready() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ensplan::service
