#pragma once

#include <ostream>

namespace structcox::cli {

/// Exit codes: 0 success, 1 input or numerical error, 2 a fit did not converge.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitNotConverged = 2;

/// Runs one command line (argv[0] is the program name).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace structcox::cli
