#pragma once

#include <filesystem>
#include <string>

namespace eisnet {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,      // selftest failure or unexpected error
    kExitUsage = 2,        // bad flags or config
    kExitMissingInput = 3, // dataset, checkpoint or permutation file missing or unreadable
    kExitOutput = 4,       // output directory not writable
    kExitNumeric = 5,      // training aborted on a non-finite loss
};

/// Parses argv (argv[0] is the program name) and runs one command.
int run_command(int argc, const char* const* argv);

/// --out, else $EISNET_OUT, else "runs".
std::filesystem::path output_root(const std::string& flag_value);

} // namespace eisnet
