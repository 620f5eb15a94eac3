#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace xview::cli {

// Runs the command line (args excludes the program name). Returns the process
// exit code: 0 ok, 2 bad arguments, 3 data validation, 4 numerical, 5 IO.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace xview::cli
