#pragma once

#include "fvforge/error.hpp"

namespace fvforge {

/// Exit codes of the `fvforge` binary.
enum ExitStatus : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitData = 3,
  kExitNumeric = 4,
};

int exit_code(ErrorKind kind);

/// Parses the command line, runs one subcommand and maps failures to an
/// exit code. Usage goes to stdout for --help, stderr otherwise.
int dispatch(int argc, const char* const* argv);

}  // namespace fvforge
