#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mutual {

// Exit codes: 0 ok, 1 usage, 2 data error, 3 internal.
int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace mutual
