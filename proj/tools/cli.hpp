#pragma once

#include <iosfwd>

namespace olre::cli {

/// Exit codes shared by every subcommand.
enum ExitCode : int { kOk = 0, kValidationError = 2, kIoError = 3 };

/// Entry point behind the `olre` binary. Data goes to files (or `out` where a
/// command documents it); diagnostics go to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace olre::cli
