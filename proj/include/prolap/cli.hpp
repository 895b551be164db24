#pragma once

#include <string>
#include <vector>

namespace prolap {

// Entry point shared by the prolap binary and the integration tests.
// args excludes the program name. Exit codes: 0 success, 1 usage error,
// 2 data error, 3 numerical failure.
int cli_run(const std::vector<std::string>& args);

}  // namespace prolap
