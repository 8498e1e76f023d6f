#pragma once

#include <string>

#include "tagi/config.hpp"
#include "tagi/net.hpp"

namespace tagi::cli {

// Shortest round-trip decimal rendering (std::to_chars), used for every
// floating-point field in CSV/console output so re-runs are byte-identical.
std::string format_double(double v);

// Parse an architecture string like "1-64tanh-64relu-1": the first token is
// the input width, each later token is a layer width with an optional
// activation suffix (identity when absent). Throws config::UsageError.
net::NetworkSpec parse_arch(const std::string& arch);

// Subcommand drivers. Each validates and consumes `cfg`, writes its artifacts
// plus resolved.conf under the configured output directory, and returns the
// process exit code. Invalid input throws config::UsageError (exit 2);
// internal errors propagate as other exceptions (exit 1).
int cmd_train(config::Config& cfg);
int cmd_optimize(config::Config& cfg);
int cmd_attack(config::Config& cfg);
int cmd_rl(config::Config& cfg);
int cmd_oracle(config::Config& cfg);

// Full argv entry point: parses flags, loads the config file, applies flag
// overrides, dispatches, and maps exceptions to exit codes 0/1/2.
int run(int argc, const char* const* argv);

}  // namespace tagi::cli
