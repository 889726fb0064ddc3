#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace setalign::cli {

/// Exit status contract of the command-line tool.
enum ExitCode : int {
  kOk = 0,
  kInputError = 1,      ///< malformed input, bad config, failed precondition
  kNumericalError = 2,  ///< training diverged or another runtime numeric failure
};

/// Runs the tool with argv-style arguments (args[0] is the program name).
/// Normal output goes to `out`, diagnostics and summaries to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace setalign::cli
