#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace evolvtrip::pipeline {

// Parses `args` (without the program name) and runs one subcommand.
// Returns the process exit status.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace evolvtrip::pipeline
