#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace measfid::cli {

/// Runs one command line (args excludes the program name). Summaries go to
/// `out`, error objects to `err`. Returns the process exit code:
/// 0 success, 1 validation failure, 2 I/O or schema error, 3 numerical failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace measfid::cli
