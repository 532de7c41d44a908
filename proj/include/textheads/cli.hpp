#pragma once

#include <iosfwd>

namespace textheads {

/// Entry point of the `textheads` tool. Returns the process exit code:
/// 0 success, 1 usage error, 2 data or format error, 3 numeric error
/// (including a failed gradient check). Errors are written to `err` as a
/// single line starting with "error:".
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace textheads
