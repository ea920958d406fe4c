#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace ensplan {

/// Hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

struct ArtifactEntry {
  std::string name;    // relative to the run directory
  std::string sha256;
  std::uint64_t bytes = 0;
};

struct RunManifest {
  std::string run_id;
  std::string command;
  std::string created_at;   // UTC, ISO 8601; the only non-deterministic field
  std::string config_hash;  // sha256 of the canonical resolved config
  std::vector<ArtifactEntry> artifacts;  // sorted by name
  std::map<std::string, std::string> module_versions;
};

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

std::map<std::string, std::string> module_versions();

/// Root directory of the run store: $ENSPLAN_RUNS if set, else "./runs".
std::filesystem::path default_store_root();

/// Run ids are "<command>-<first 12 hex of the config hash>": letters,
/// digits, '-' and '_' only.
bool valid_run_id(const std::string& id);
std::string make_run_id(const std::string& command, const std::string& config_hash);

/// Collects artifacts in memory and publishes them as one directory:
/// written under a temporary name, then renamed into place. An existing run
/// with the same id is replaced.
class RunWriter {
 public:
  RunWriter(std::filesystem::path root, std::string command, const nlohmann::json& resolved_config);

  const std::string& run_id() const { return manifest_.run_id; }
  void add(const std::string& name, std::string bytes);
  void add_json(const std::string& name, const nlohmann::json& j);

  /// Writes files and manifest.json; returns the final directory.
  std::filesystem::path commit();

 private:
  std::filesystem::path root_;
  RunManifest manifest_;
  std::map<std::string, std::string> files_;
};

struct RunSummary {
  std::string run_id;
  std::string command;
  std::string created_at;
};

/// Read side used by the service.
class RunStore {
 public:
  explicit RunStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::vector<RunSummary> list() const;
  std::optional<RunManifest> manifest(const std::string& run_id) const;
  /// Throws IoError if missing, FormatError on a hash mismatch.
  std::string read_artifact(const std::string& run_id, const std::string& name) const;

 private:
  std::filesystem::path root_;
};

/// Checks that every listed artifact exists with the recorded hash. Returns
/// the problems found; empty means the run is intact.
std::vector<std::string> verify_run(const std::filesystem::path& run_dir);

/// JSON text with sorted keys and a trailing newline; what every artifact
/// uses so identical content gives identical bytes.
std::string canonical_dump(const nlohmann::json& j);

}  // namespace ensplan
