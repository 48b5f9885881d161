#pragma once

#include <iosfwd>

namespace qtt {

/// Verb dispatcher behind the `qtt` binary. Returns the process exit code:
/// 0 success, 2 validation/format error, 3 fit non-convergence. Errors go to
/// `err` with the machine-parsable prefix ERR:<kind>:.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace qtt
