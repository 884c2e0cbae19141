#pragma once

#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "muse/model.hpp"
#include "muse/training.hpp"

namespace muse::cli {

// Layered configuration: TOML file < MUSE_* environment < command-line flags.
struct RunConfig {
    model::ModelConfig model;
    train::TrainConfig train;
    model::GenerationConfig generation;

    nlohmann::json to_json() const;
};

// Flat "section.key" -> raw string value. Supported TOML subset: [sections],
// key = string | int | float | bool | array-of-strings.
std::map<std::string, std::string> parse_toml(const std::string& path);

// Environment overrides: MUSE_<SECTION>__<KEY> (e.g. MUSE_TRAIN__EPOCHS=10).
std::map<std::string, std::string> env_overrides();

// Applies entries onto a RunConfig; unknown keys are rejected.
void apply_entries(RunConfig& cfg, const std::map<std::string, std::string>& entries);

RunConfig resolve_config(const std::string& toml_path,
                         const std::map<std::string, std::string>& flag_overrides);

// Archives the exact resolved configuration next to a run output.
void archive_config(const RunConfig& cfg, const std::string& output_path);

}  // namespace muse::cli
