#pragma once

#include <string>
#include <vector>

namespace geomatch::cli {

/// Entry point for the command-line front end. args excludes the program
/// name. Returns the process exit code: 0 success, 1 runtime failure,
/// 2 usage/config error.
int run(const std::vector<std::string>& args);

}  // namespace geomatch::cli
