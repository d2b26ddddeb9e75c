#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cspcn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Runs one command. `args` excludes the program name. Human-readable output
/// goes to `out`, diagnostics and usage text to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cspcn::cli
