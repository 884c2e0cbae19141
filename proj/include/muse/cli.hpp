#pragma once

#include <string>
#include <vector>

namespace muse::cli {

// Subcommands: ingest, pretrain, train, generate, evaluate, analyze-pos,
// rater-agreement. Exit codes: 0 success, 1 validation error, 2 runtime failure.
int dispatch(std::vector<std::string> argv);

}  // namespace muse::cli
