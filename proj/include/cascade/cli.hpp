#pragma once

namespace cascade {

/// Exit codes: 0 success, 1 validation/config error, 2 solver failure,
/// 3 verification failure.
int run_cli(int argc, const char* const* argv);

}  // namespace cascade
