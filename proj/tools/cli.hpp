#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rap::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFault = 1;
inline constexpr int kExitUsage = 2;

/// Runs one `rap` command. `args` excludes the program name. Returns the
/// process exit code: 0 success, 1 runtime fault, 2 usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string version_string();

}  // namespace rap::cli
