#ifndef SPATML_CLI_HPP
#define SPATML_CLI_HPP

#include <string>
#include <vector>

namespace spatml {

/* Entry point for the `spatml` tool; exposed as a function so tests can
 * drive end-to-end runs in-process.  On failure prints one line of
 * machine-readable JSON ({"error": {"kind", "message"}}) to stderr and
 * returns a nonzero code. */
int run_cli(const std::vector<std::string>& args);

}  // namespace spatml

#endif  // SPATML_CLI_HPP
