#pragma once

#include "editlab/config.hpp"
#include "editlab/report.hpp"
#include "editlab/synth.hpp"

#include <string>
#include <vector>

namespace editlab {

std::vector<std::string> registered_experiments();

// Copy of cfg with derivable seeds filled in: synth and tolerance seeds left
// at 0 become fixed children of the top-level seed.
ExperimentConfig resolve_config(const ExperimentConfig& cfg);

// Runs the named pipeline on a freshly generated suite and returns the report
// without touching the filesystem.
RunReport execute_experiment(const ExperimentConfig& cfg);

// execute + emit_report into cfg.output_dir.
RunReport run_experiment(const ExperimentConfig& cfg);

// One strategy/rule pass over a suite: optimize, update, then measure
// per-subject tolerance radii, per-variant activation deviations and argmax
// efficacy. Shared by the comparison experiments.
struct StrategyRunMetrics {
    std::vector<double> radii;            // per subject, group order
    std::vector<double> deviations;       // per (subject, fact, variant)
    std::vector<std::string> deviation_ids;
    std::vector<bool> deviation_within_radius;
    double median_radius = 0.0;
    double fraction_d_le_r = 0.0;
    double canonical_rate = 0.0;
    double variant_rate = 0.0;
    double converged_rate = 0.0;
};

StrategyRunMetrics run_strategy_pipeline(const SynthSuite& suite, EditStrategy strategy,
                                         const UpdateRule& rule, const OptimizerConfig& optimizer,
                                         const ToleranceConfig& tolerance,
                                         double variant_strength, std::uint64_t radius_seed);

// Thread count from EDITLAB_THREADS; unset or invalid means 1.
std::size_t configured_threads();

} // namespace editlab
