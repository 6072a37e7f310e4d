#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace stga {

inline constexpr int kExitOk = 0;
inline constexpr int kExitArgument = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

/// Runs `stga <subcommand> ...`. args[0] is the program name. JSON results go
/// to `out`, progress and errors to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stga
