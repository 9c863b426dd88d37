#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace histream {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2, kExitNumeric = 3 };

/// Runs `histream <args...>` (args exclude the program name).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace histream
