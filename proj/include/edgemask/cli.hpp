#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace edgemask::cli {

inline constexpr std::string_view kVersion = "0.1.0";
inline constexpr int kMetricsSchemaVersion = 1;

enum ExitCode : int { kOk = 0, kConfigError = 1, kNumericError = 2, kCheckFailed = 3 };

/// Runs one subcommand. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

/// FNV-1a 64 over the bytes, as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace edgemask::cli
