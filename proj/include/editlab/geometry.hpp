#pragma once

#include "editlab/editors.hpp"
#include "editlab/linalg.hpp"
#include "editlab/memory.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace editlab {

struct ToleranceConfig {
    double tau = 0.9;            // per-fact probability threshold under noise
    double step = 1.0;           // absolute rho increment
    double relative_step = 0.0;  // when > 0, effective step = relative_step * ||v*||
    std::size_t trials_per_radius = 10;
    double success_rate = 0.9;   // fraction of trials that must succeed
    double rho_max = 1e4;
    std::uint64_t seed = 0;
};

// Largest noise magnitude on the optimized value for which every fact of the
// group still clears tau, estimated by an increasing rho search with
// trials_per_radius sphere samples per step. Noise streams depend only on
// (seed, rho index, trial index) so measurements with the same config share
// their samples.
double tolerance_radius(const AssociativeMemory& m, const SubjectGroup& group,
                        const DenseVector& v_star, const ToleranceConfig& cfg);

// || delta_w (k_tilde - k_o) ||_2
double activation_deviation(const DenseMatrix& delta_w, const DenseVector& k_o,
                            const DenseVector& k_tilde);

// 1 - cos(g1, g2), in [0, 2]
double gradient_conflict(const DenseVector& g1, const DenseVector& g2);

struct ConflictDistribution {
    struct Pair {
        std::string subject_id;
        std::size_t fact_a = 0;
        std::size_t fact_b = 0;
        double score = 0.0;
    };
    std::vector<Pair> pairs;
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
    double stddev = 0.0;
};

// Pairwise conflict of per-relation gradients, evaluated at each group's
// shared pre-edit value. Every group needs at least two facts.
ConflictDistribution conflict_distribution(const AssociativeMemory& m,
                                           const std::vector<SubjectGroup>& groups);

struct SimilarityBlocks {
    std::vector<std::string> labels;
    DenseMatrix means; // entry (a, b): mean pairwise cosine between groups a and b
};

SimilarityBlocks key_similarity_blocks(
    const std::vector<std::pair<std::string, std::vector<DenseVector>>>& key_groups);

// || delta_w k_old ||_2
double locality_deviation(const DenseMatrix& delta_w, const DenseVector& k_old);

struct AmplificationStats {
    std::vector<double> r_cov; // ||(C+KK^T)^{-1} d|| / ||d|| per delta
    std::vector<double> r_id;  // ||(I+KK^T)^{-1} d|| / ||d|| per delta
    double median_r_cov = 0.0;
    double median_r_id = 0.0;
    std::size_t amplified_count = 0; // deltas with r_cov > r_id
    double lambda_max_c_inv = 0.0;   // 1 / lambda_min(C)
    double kappa_c = 0.0;
    std::vector<double> delta_proj_norms; // |<delta, top eigenvector of C^{-1}>|
};

AmplificationStats amplification_analysis(const DenseMatrix& c, const DenseMatrix& keys,
                                          const std::vector<DenseVector>& deltas);

// Aggregate of whatever diagnostics an experiment produced; unset sections
// stay empty.
struct GeometryReport {
    struct Radius {
        std::string subject_id;
        double r = 0.0;
    };
    struct Deviation {
        std::string fact_id;
        std::string form;
        double d = 0.0;
    };
    std::vector<Radius> radii;
    std::vector<Deviation> deviations;
    ConflictDistribution conflicts;
    SimilarityBlocks similarity;
    AmplificationStats amplification;
};

double median(std::vector<double> values);

} // namespace editlab
