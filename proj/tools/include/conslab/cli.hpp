#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace conslab::cli {

enum ExitCode : int {
  kSuccess = 0,
  kFailure = 1,     // metric, validation or training failure
  kInputError = 2,  // bad flags, unreadable or malformed inputs, scorer unavailable
};

/// Runs the conslab command line. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace conslab::cli
