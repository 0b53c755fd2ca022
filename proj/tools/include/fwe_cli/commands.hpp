#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fwe::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitIo = 3,
  kExitPrecondition = 4,
  kExitStrictFailure = 5,
};

/// Entry point shared by the executable and the tests. args excludes the
/// program name. Machine output goes to out, progress and errors to err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fwe::cli
