#pragma once

#include <string>
#include <vector>

namespace ncdiff {

/// The `ncd` command line: parses argv, runs one subcommand, returns the
/// process exit code. Errors print to stderr and yield a nonzero code
/// instead of throwing, so tests can drive the tool in-process.
int run_ncd(int argc, const char* const* argv);

/// Same, from bare arguments (no program name), e.g.
/// run_ncd({"compress", "--input", "a.png", ...}).
int run_ncd(const std::vector<std::string>& args);

}  // namespace ncdiff
