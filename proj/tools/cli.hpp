#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace chpd::cli {

/// Runs one command. Returns 0 on success, 1 on a domain or I/O error and
/// 2 on a usage error. argv[0] is the program name.
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace chpd::cli
