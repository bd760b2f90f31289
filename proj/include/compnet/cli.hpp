#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace compnet::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,    // bad flags, invalid config or geometry
  kIo = 3,       // missing/unreadable/corrupt files
  kNumeric = 4,  // numeric blow-up or other runtime failure
};

/// Runs the `compnet` command line with `args` (program name excluded).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace compnet::cli
