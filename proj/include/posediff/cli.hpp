#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace posediff {

// Runs one command line (args[0] is the program name) and returns the exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace posediff
