#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bscaling {

/// Subcommands: fit, predict, transforms, bvar, select-knots, infer,
/// simulate, bench, r2. Returns 0 on success, 1 usage, 2 data, 3 numerical.
/// Failures print one line `error kind=<Kind> exit=<code> msg="..."` to err.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// "11..25" or "11,13,15".
std::vector<int> parse_int_list(const std::string& text);

}  // namespace bscaling
