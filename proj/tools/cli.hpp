#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace slicevlp::cli {

// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kConfig = 3,
  kDependency = 4,
  kInput = 5,
  kFormat = 6,
  kLoad = 7,
  kCompatibility = 8,
  kEvaluation = 9,
  kCapacity = 10,
  kBatch = 11,
  kDimension = 12,
  kContract = 13,
};

std::string version_string();

// Runs one command. args[0] is the program name. Progress goes to `out`;
// failures print a single "error: <category>: <message>" line to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace slicevlp::cli
