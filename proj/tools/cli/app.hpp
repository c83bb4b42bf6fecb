#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mstree::cli {

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kValidation = 2,
  kResource = 3,
  kNumerical = 4,
};

/// Runs one mstree command line (args excludes the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mstree::cli
