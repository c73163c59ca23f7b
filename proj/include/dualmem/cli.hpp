#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dualmem {

/// Command-line entry point. Returns 0 on success, 1 when a task or
/// validation fails, 2 on usage errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dualmem
