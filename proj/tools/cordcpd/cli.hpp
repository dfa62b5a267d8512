#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace cordcpd::cli {

/// Runs the command line; returns the process exit status. Output and
/// diagnostics go to the given streams.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cordcpd::cli
