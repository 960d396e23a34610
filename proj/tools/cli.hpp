#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace flagforge::cli {

/// Runs one command line (without the program name). Returns the process
/// exit code: 0 success, 1 usage or contract error, 2 environment error.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace flagforge::cli
