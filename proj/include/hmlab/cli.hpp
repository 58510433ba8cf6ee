#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hmlab {

// Runs one command line (args excludes the program name). Returns the exit
// status: 0 success / pass, 1 verification failure, 2 usage or load error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hmlab
