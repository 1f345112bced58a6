#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace palign::cli {

/// Exit codes shared by every subcommand.
enum ExitCode : int { kOk = 0, kError = 1, kCollision = 2, kTrendFailed = 3 };

/// Runs `palign <args...>` (program name excluded), writing human output to `out` and
/// diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace palign::cli
