#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sra::cli {

/// Runs one `sra` subcommand. Returns the process exit status; errors are
/// reported on `err` and never escape as exceptions.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv);

}  // namespace sra::cli
