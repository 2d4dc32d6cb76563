#pragma once

#include <string>
#include <vector>

namespace ltlab {

// Entry point behind the ltlab binary. Exit codes: 0 success, 1 check or run
// failure, 2 usage error.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace ltlab
