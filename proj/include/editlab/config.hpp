#pragma once

#include "editlab/editors.hpp"
#include "editlab/geometry.hpp"
#include "editlab/synth.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>

namespace editlab {

// Which constraint matrix an experiment's updates use; the covariance /
// null-space matrix itself comes from the generated suite.
struct RuleConfig {
    std::string kind = "covariance"; // covariance | identity | nullspace
    double eigen_cutoff = 1e-2;
};

struct ExperimentConfig {
    std::string experiment;
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    SynthConfig synth;
    RuleConfig rule;
    OptimizerConfig optimizer;
    ToleranceConfig tolerance;
};

// Defaults every experiment starts from; the synthetic tolerance step is
// relative (0.05 * ||v*||) rather than the absolute presets.
ExperimentConfig default_experiment_config();

// Strict parse: unknown keys are rejected by name, missing ones take
// defaults. Accepts a JSON document or "a.b.c = value" lines.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);

void validate_config(const ExperimentConfig& cfg);

nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);

} // namespace editlab
