#pragma once

namespace dgd::cli {

/// Entry point of the `dgd` tool; returns the process exit code.
int run_cli(int argc, const char* const* argv);

}  // namespace dgd::cli
