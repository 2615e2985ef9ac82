#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace vocnet::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitNumerical = 3,
};

// Entry point of the vocnet tool. args excludes the program name. Every
// command is a pure function of its inputs on disk, the config and --seed.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vocnet::cli
