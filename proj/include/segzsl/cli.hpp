#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace segzsl {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitConfig = 3;

/// Runs one subcommand. `args` excludes the program name. Failures print a
/// single JSON error line to `err` and map to the exit codes above.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace segzsl
