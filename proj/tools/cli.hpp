#pragma once

namespace fmvp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitContract = 1;
inline constexpr int kExitFormat = 2;

/// Parse and run one subcommand. Never throws; errors go to stderr and map
/// to the exit codes above.
int run(int argc, const char* const* argv);

}  // namespace fmvp::cli
