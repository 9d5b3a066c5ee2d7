#pragma once

// Entry point of the `canopy` executable. Returns the process exit code:
// 0 ok, 2 bad configuration, 3 bad input data, 4 numerical failure, 1 other.
namespace canopy::cli {

int run_cli(int argc, char** argv);

}  // namespace canopy::cli
