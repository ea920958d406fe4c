#pragma once

#include <iosfwd>

namespace ensplan::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kConfigError = 2,
  kInfeasible = 3,
  kFailure = 4,
};

/// Entry point of the `ensplan` tool. Output goes to `out`, diagnostics to
/// `err`; the return value is the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ensplan::cli
