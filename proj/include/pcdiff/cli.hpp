#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pcdiff::cli {

// Runs one subcommand; args excludes the program name. Failures are
// reported on `err` as a single "error: ..." line with a nonzero result.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pcdiff::cli
