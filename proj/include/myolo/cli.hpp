#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace myolo::cli {

/// Exit codes shared by every command.
enum ExitCode : int { kOk = 0, kInternal = 1, kBadInput = 2 };

/// Runs one command line (args[0] is the program name). Output documents go
/// to `out` (or to --out), diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace myolo::cli
