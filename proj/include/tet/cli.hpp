#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace tet::cli {

enum ExitCode : int { ok = 0, usage_error = 1, data_error = 2, numeric_failure = 3 };

/// Entry point of the `tet` binary; argv[0] is the program name.
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace tet::cli
