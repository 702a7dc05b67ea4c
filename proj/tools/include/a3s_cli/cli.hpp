#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace a3s::cli {

/// Runs the a3s command line. Machine-readable output goes to out,
/// diagnostics and progress to err. Returns the process exit code:
/// 0 success, 1 user or configuration error, 2 internal invariant failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace a3s::cli
