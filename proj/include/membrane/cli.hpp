// ============================================================================
// Command-line surface: every experiment and verification suite behind one
// argv-style entry point so tests can drive it in-process.
// ============================================================================
#pragma once

#include <string>
#include <vector>

namespace membrane {

// Parses and executes one command line (without the program name).
// Exit codes: 0 success / all checks passed; 1 a verification check failed
// (the failing checks are named on standard error); 2 configuration error
// (unknown command, bad flag, invalid parameter); 3 solver or I/O failure.
int run_cli(const std::vector<std::string>& args);

}  // namespace membrane
