#pragma once

// Subcommand runners and the command-line entry point.

#include <iosfwd>
#include <string>
#include <vector>

#include "coldisturb/config.hpp"

namespace coldisturb {

inline constexpr const char* kToolName = "coldisturb";
inline constexpr const char* kToolVersion = "1.0.0";

const std::vector<std::string>& subcommand_names();

/// Runs one subcommand and writes its CSVs plus manifest.json under
/// `<cfg.out_dir>/<subcommand>/`. Returns the written file names.
std::vector<std::string> run_subcommand(const std::string& subcommand, const RunConfig& cfg);

/// Exit codes: 0 success, 2 configuration or usage error, 3 runtime error.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace coldisturb
