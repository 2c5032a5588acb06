#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "fhdgm/error.hpp"

namespace fhdgm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

/// Process exit code for a library error.
int exit_code(ErrorKind kind) noexcept;

/// Parses `args` (without the program name), runs one subcommand and returns
/// the exit code. Diagnostics go to `err`, progress to `log`.
int run(const std::vector<std::string>& args, std::ostream& log, std::ostream& err);

}  // namespace fhdgm::cli
