#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dtigeo {

/// Exit statuses of the command-line tool.
enum ExitCode : int {
  exit_ok = 0,
  exit_usage = 1,
  exit_input = 2,
  exit_format = 3,
  exit_numerical = 4,
};

/// Runs one command line (without the program name). Never throws.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dtigeo
