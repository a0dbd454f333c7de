#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "skinnet/error.hpp"

namespace skinnet::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,
  kExitData = 2,
  kExitNumeric = 3,
  kExitArchive = 4,
  kExitWrite = 5,
};

int exit_code_for(ErrorKind kind);

/// `args` excludes the program name. Normal output goes to `out`, warnings
/// and errors to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace skinnet::cli
