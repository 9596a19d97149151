#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace drnets::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kIo = 3,
  kEstimation = 4,
  kDiagnostic = 5,
};

/// Runs `drnets <args...>`; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace drnets::cli
