#pragma once

#include <iosfwd>

namespace stepcount {

// Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
int run_cli(int argc, char** argv);
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace stepcount
