#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace acr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

/// Runs one subcommand: gen-data, train, eval, analyze-routing,
/// export-attr-maps or gradcheck. `args` excludes the program name.
/// Returns 0 on success, 2 on a configuration error, 3 on a runtime failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

}  // namespace acr::cli
