#pragma once

namespace pstarmax::cli {

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kValidation = 1;
inline constexpr int kUsage = 2;
inline constexpr int kNumerical = 3;

/// Parses and runs one command line. Errors are reported as JSON on stderr.
int run(int argc, char** argv);

}  // namespace pstarmax::cli
