#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace k3gaps::cli {

// Exit codes.
inline constexpr int kPass = 0;
inline constexpr int kFailure = 1;
inline constexpr int kUsage = 2;

// Runs the k3gaps command line; argv[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace k3gaps::cli
