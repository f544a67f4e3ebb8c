#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hcl::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kDataError = 2,
  kNumericalFailure = 3,
};

// Entry point shared by the `hcl` binary and the tests. `args` excludes the
// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hcl::cli
