#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "ensplan/cli.hpp"

namespace fixture {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("ensplan_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

/// A short flight on a coarse lattice; quick enough for unit tests.
inline std::string small_flight_toml(double payload_mean = 12000.0, const std::string& extra = "") {
  return "[flight]\n"
         "origin = { code = \"SNN\", lat = 52.70, lon = -8.92 }\n"
         "destination = { code = \"KEF\", lat = 63.99, lon = -22.62 }\n"
         "departure_h = 2.0\n"
         "cost_index = 15.0\n"
         "aircraft = \"narrowbody\"\n"
         "[payload]\n"
         "mean = " + std::to_string(payload_mean) + "\n"
         "sigma = 800.0\n"
         "[stochastic]\n"
         "payload_samples = 1\n"
         "[weather]\n"
         "seed = 5\n"
         "n_members = 6\n"
         "[lattice]\n"
         "n_layers = 3\n"
         "n_offsets = 3\n" + extra;
}

struct CliResult {
  int code = 0;
  std::string out, err;
};

inline CliResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "ensplan");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliResult r;
  r.code = ensplan::cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

/// Run directory printed on the "run: <dir>" line.
inline std::filesystem::path run_dir(const CliResult& r) {
  const auto pos = r.out.rfind("run: ");
  if (pos == std::string::npos) return {};
  auto end = r.out.find('\n', pos);
  return r.out.substr(pos + 5, end == std::string::npos ? std::string::npos : end - pos - 5);
}

}  // namespace fixture
