#pragma once

#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace promptscape {

inline constexpr std::string_view kToolVersion = "0.1.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitInput = 2;
inline constexpr int kExitBackend = 3;

// `args` excludes the program name. Progress and errors go to `err`;
// machine-readable results (only `analyze range`) go to `out`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace promptscape
