#pragma once

#include "run_config.hpp"

#include <vector>

namespace svclab::cli {

/// Every svc-lab subcommand with its options and handler.
const std::vector<CommandSpec>& commands();

/// Creates a study in `dir` from a pool config written by evaluate, copying its audio.
void create_study_from_pool(const fs::path& dir, const fs::path& config);

/// Entry point shared by the binary and the tests: 0 success, 1 runtime failure, 2 usage error.
int run(int argc, const char* const* argv, const EnvLookup& env);

}  // namespace svclab::cli
