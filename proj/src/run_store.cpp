#include "ensplan/run_store.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>
#include <unistd.h>

#include "ensplan/error.hpp"

namespace ensplan {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot read " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + p.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + p.string());
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool safe_name(const std::string& name) {
  if (name.empty() || name.front() == '/' || name.find("..") != std::string::npos) return false;
  for (char c : name)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.' || c == '/')) return false;
  return true;
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 computation failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

std::string canonical_dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

nlohmann::json to_json(const RunManifest& m) {
  nlohmann::json arts = nlohmann::json::array();
  for (const auto& a : m.artifacts) arts.push_back({{"name", a.name}, {"sha256", a.sha256}, {"bytes", a.bytes}});
  return {{"run_id", m.run_id},
          {"command", m.command},
          {"created_at", m.created_at},
          {"config_hash", m.config_hash},
          {"artifacts", arts},
          {"module_versions", m.module_versions}};
}

RunManifest manifest_from_json(const nlohmann::json& j) {
  try {
    RunManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.command = j.at("command").get<std::string>();
    m.created_at = j.at("created_at").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& a : j.at("artifacts"))
      m.artifacts.push_back({a.at("name").get<std::string>(), a.at("sha256").get<std::string>(), a.at("bytes").get<std::uint64_t>()});
    m.module_versions = j.at("module_versions").get<std::map<std::string, std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(0, std::string("manifest: ") + e.what());
  }
}

std::map<std::string, std::string> module_versions() {
  return {{"weather", "1"}, {"performance", "1"}, {"router", "1"}, {"stochastic", "1"}, {"predict", "1"},
          {"harness", "1"}, {"schedule", "1"}, {"cli_api", "1"}, {"ensplan", "0.1.0"}};
}

fs::path default_store_root() {
  if (const char* env = std::getenv("ENSPLAN_RUNS"); env && *env) return env;
  return "runs";
}

bool valid_run_id(const std::string& id) {
  if (id.empty() || id.size() > 128) return false;
  for (char c : id)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')) return false;
  return true;
}

std::string make_run_id(const std::string& command, const std::string& config_hash) {
  return command + "-" + config_hash.substr(0, 12);
}

RunWriter::RunWriter(fs::path root, std::string command, const nlohmann::json& resolved_config)
    : root_(std::move(root)) {
  manifest_.command = std::move(command);
  const std::string cfg = canonical_dump({{"command", manifest_.command}, {"config", resolved_config}});
  manifest_.config_hash = sha256_hex(cfg);
  manifest_.run_id = make_run_id(manifest_.command, manifest_.config_hash);
  manifest_.module_versions = module_versions();
  files_["config.json"] = cfg;
}

void RunWriter::add(const std::string& name, std::string bytes) {
  if (!safe_name(name) || name == "manifest.json") throw InvalidSpec("bad artifact name '" + name + "'");
  files_[name] = std::move(bytes);
}

void RunWriter::add_json(const std::string& name, const nlohmann::json& j) { add(name, canonical_dump(j)); }

fs::path RunWriter::commit() {
  fs::create_directories(root_);
  const fs::path final_dir = root_ / manifest_.run_id;
  const fs::path tmp = root_ / (".tmp-" + manifest_.run_id + "-" + std::to_string(::getpid()));
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  manifest_.artifacts.clear();
  for (const auto& [name, bytes] : files_) {
    const fs::path p = tmp / name;
    fs::create_directories(p.parent_path());
    write_file(p, bytes);
    manifest_.artifacts.push_back({name, sha256_hex(bytes), bytes.size()});
  }
  manifest_.created_at = utc_now();
  write_file(tmp / "manifest.json", canonical_dump(to_json(manifest_)));
  // rename() cannot replace a non-empty directory; move the old run aside
  // first so readers never see a half-written one.
  if (fs::exists(final_dir)) {
    const fs::path old = root_ / (".old-" + manifest_.run_id + "-" + std::to_string(::getpid()));
    fs::rename(final_dir, old);
    fs::rename(tmp, final_dir);
    fs::remove_all(old);
  } else {
    fs::rename(tmp, final_dir);
  }
  return final_dir;
}

RunStore::RunStore(fs::path root) : root_(std::move(root)) {}

std::vector<RunSummary> RunStore::list() const {
  std::vector<RunSummary> out;
  if (!fs::is_directory(root_)) return out;
  for (const auto& e : fs::directory_iterator(root_)) {
    const std::string id = e.path().filename().string();
    if (!e.is_directory() || !valid_run_id(id)) continue;
    const auto m = manifest(id);
    if (m) out.push_back({m->run_id, m->command, m->created_at});
  }
  std::sort(out.begin(), out.end(), [](const RunSummary& a, const RunSummary& b) { return a.run_id < b.run_id; });
  return out;
}

std::optional<RunManifest> RunStore::manifest(const std::string& run_id) const {
  if (!valid_run_id(run_id)) return std::nullopt;
  const fs::path p = root_ / run_id / "manifest.json";
  if (!fs::exists(p)) return std::nullopt;
  try {
    return manifest_from_json(nlohmann::json::parse(read_file(p)));
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  } catch (const FormatError&) {
    return std::nullopt;
  }
}

std::string RunStore::read_artifact(const std::string& run_id, const std::string& name) const {
  const auto m = manifest(run_id);
  if (!m) throw IoError("no run '" + run_id + "'");
  for (const auto& a : m->artifacts) {
    if (a.name != name) continue;
    std::string bytes = read_file(root_ / run_id / name);
    if (sha256_hex(bytes) != a.sha256) throw FormatError(0, "artifact " + name + " of run " + run_id + " fails its hash");
    return bytes;
  }
  throw IoError("run '" + run_id + "' has no artifact " + name);
}

std::vector<std::string> verify_run(const fs::path& run_dir) {
  std::vector<std::string> problems;
  RunManifest m;
  try {
    m = manifest_from_json(nlohmann::json::parse(read_file(run_dir / "manifest.json")));
  } catch (const std::exception& e) {
    return {std::string("manifest unreadable: ") + e.what()};
  }
  for (const auto& a : m.artifacts) {
    const fs::path p = run_dir / a.name;
    if (!fs::exists(p)) {
      problems.push_back("missing " + a.name);
      continue;
    }
    if (sha256_file(p) != a.sha256) problems.push_back("hash mismatch " + a.name);
  }
  return problems;
}

}  // namespace ensplan
