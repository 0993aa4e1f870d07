#pragma once

#include <iosfwd>

namespace disfluent::cli {

/// Entry point behind the `disfluent` binary. Exit codes: 0 success, 1 user
/// or data error, 2 internal error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace disfluent::cli
