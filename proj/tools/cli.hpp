#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace labprod::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitInternal = 3;
inline constexpr int kExitUsage = 64;

/// Runs the command line `args` (without the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace labprod::cli
