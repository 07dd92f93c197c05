#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace trimix::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;  // contract, format, config or I/O error
inline constexpr int kNumeric = 2;  // non-finite loss, failed gradient/oracle check

// Runs one command line (args excludes the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace trimix::cli
