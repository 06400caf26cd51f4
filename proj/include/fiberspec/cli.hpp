#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace fiberspec::cli {

/// Exit codes of `run`.
enum ExitCode : int { kOk = 0, kValidation = 1, kIo = 2 };

/// Entry point of the fiberspec command; args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fiberspec::cli
