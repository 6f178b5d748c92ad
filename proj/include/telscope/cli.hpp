#pragma once

#include <iosfwd>

namespace telscope::cli {

inline constexpr const char* kVersion = "0.1.0";

// Exit codes shared by every subcommand.
inline constexpr int kOk = 0;
inline constexpr int kPartialFailure = 1;
inline constexpr int kUsageError = 2;
inline constexpr int kIoError = 3;

/// Entry point for `telscope synth | run | explain | version`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace telscope::cli
