#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dynorg {

/// Runs the dynorg command-line tool (subcommands market, gd, laws). `args`
/// excludes the program name. Output not directed to --out files goes to
/// `out`; diagnostics and DYNORG_LOG lines go to `err`. Returns the process
/// exit code: 0 on success, 1 when a checked law fails or an internal error
/// occurs, 2 on malformed flags or input files.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

/// argv adapter for main(); uses std::cout and std::cerr.
int run_cli(int argc, char** argv);

}  // namespace dynorg
