#pragma once

// Command-line front end. Kept in a library so tests can drive it in-process.

#include <ostream>
#include <string>
#include <vector>

namespace gamblet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command; args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Frozen C_a from data/calibration.json, 0.5 when the file is unavailable.
double calibrated_C_a();

}  // namespace gamblet::cli
