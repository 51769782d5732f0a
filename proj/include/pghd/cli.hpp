#pragma once

#include <iosfwd>

namespace pghd::cli {

// Process exit codes.
inline constexpr int kOk = 0;
inline constexpr int kInternal = 1;
inline constexpr int kUsage = 2;
inline constexpr int kMissingFile = 3;
inline constexpr int kSchema = 4;
inline constexpr int kVersion = 5;
inline constexpr int kValidation = 6;
inline constexpr int kLookup = 7;
inline constexpr int kFingerprint = 8;

/// Runs one subcommand (generate, train, evaluate, dca, explain, serve).
/// Failures print a single JSON line {"error", "message", "exit_code"[, "field"]}
/// to `err` and return the matching exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pghd::cli
