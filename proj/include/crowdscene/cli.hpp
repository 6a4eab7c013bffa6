#pragma once

#include <string>
#include <vector>

namespace crowdscene {

/// Subcommands: synth, ingest, features, train, predict, fuse, evaluate, serve.
/// Returns 0 on success, 1 on runtime failure and 2 on usage errors.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace crowdscene
