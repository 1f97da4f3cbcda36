#pragma once

#include <string>
#include <vector>

namespace vsd::cli {

// Entry point behind the vsd tool: curate | gen | train | sample | eval |
// gradcheck. Returns the process exit code; partial outputs of a failed run
// are removed.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace vsd::cli
