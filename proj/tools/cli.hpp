#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace netrecast::cli {

// Exit statuses.
inline constexpr int kOk = 0;
inline constexpr int kConfigError = 2;
inline constexpr int kRuntimeError = 3;

// Runs one command. `args` excludes the program name. Progress goes to
// `out`, the single-line diagnostic of a failure to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Output root when --out is not given: $NETRECAST_OUT, else "runs".
std::string default_output_root();

}  // namespace netrecast::cli
