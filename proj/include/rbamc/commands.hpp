#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rbamc {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitIo = 2, kExitFormat = 3, kExitNumeric = 4 };

/// Runs the `amc` command line. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rbamc
