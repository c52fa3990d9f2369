#ifndef DYNBPS_CLI_HPP
#define DYNBPS_CLI_HPP

#include <ostream>
#include <string>
#include <vector>

#include "dynbps/common.hpp"

namespace dynbps {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitData = 3, kExitNumeric = 4 };

int exit_code_for(ErrorKind kind);

/// Runs one command. `args` excludes the program name. Failures print a
/// single "error: kind=<Kind> code=<n> message=<text>" line to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dynbps

#endif  // DYNBPS_CLI_HPP
