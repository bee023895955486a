#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace entfact::cli {

// Runs one pipeline stage: `<subcommand> --config <path> [--key=value ...]`.
// Returns 0 on success, 1 on a module error and 2 on config validation
// failure; errors are reported as one `<CODE>: <message>` line on `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace entfact::cli
