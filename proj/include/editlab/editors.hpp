#pragma once

#include "editlab/linalg.hpp"
#include "editlab/memory.hpp"

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace editlab {

// Constraint matrix of the closed-form update. Covariance regularizes with a
// second-moment matrix of background keys, Identity with an isotropic one,
// NullSpace additionally projects the edit onto low-variance eigendirections
// of its matrix.
struct CovarianceRule {
    DenseMatrix c; // d_k x d_k, SPD
};
struct IdentityRule {};
struct NullSpaceRule {
    DenseMatrix c; // d_k x d_k, symmetric
    double eigen_cutoff = 1e-2; // relative to the largest eigenvalue
};
using UpdateRule = std::variant<CovarianceRule, IdentityRule, NullSpaceRule>;

struct OptimizerConfig {
    std::size_t steps = 35;
    double learning_rate = 0.5;
    double weight_decay = 0.5; // pulls toward the pre-edit value, not zero
    double convergence_prob = 0.99;
};

// One fact of a subject: the relation readout it must satisfy, the token it
// must produce, and the alternative prompt forms of the same fact.
struct Fact {
    RelationReadout readout;
    std::size_t target_token = 0;
    std::vector<PromptVariant> variants;
};

struct SubjectGroup {
    std::string subject_id;
    DenseVector key; // canonical declarative key shared by all facts
    std::vector<Fact> facts;
};

SubjectGroup group_requests(const DenseVector& key, const std::vector<EditRequest>& requests,
                            const std::vector<RelationReadout>& readouts);

struct ValueOptimizationResult {
    DenseVector v_star;
    std::vector<bool> converged;    // one flag per fact
    std::vector<double> loss_trace; // total loss at init and after each step
    bool loss_monotone = true;      // decrease recorded, not enforced
    std::size_t steps_taken = 0;
    double final_loss = 0.0;
};

struct EditOutcome {
    DenseMatrix delta_w;          // d_v x d_k
    DenseMatrix optimized_values; // d_v x B
    DenseMatrix keys;             // d_k x B
    DenseMatrix residual;         // V - W0 K
    std::vector<bool> converged;  // per column
    std::vector<double> final_losses;
};

enum class EditStrategy { isolated, joint, hki };

// Gradient descent on a single relation's loss from the pre-edit value.
ValueOptimizationResult optimize_value_isolated(const AssociativeMemory& m,
                                                const RelationReadout& r, const DenseVector& key,
                                                std::size_t target, const OptimizerConfig& cfg);

// Minimizes the sum of all the group's relation losses at the shared key.
ValueOptimizationResult optimize_value_joint(const AssociativeMemory& m, const SubjectGroup& group,
                                             const OptimizerConfig& cfg);

// Robust centroid: mean over the fact's prompt variants of the value gradient,
// each variant evaluated at the value offset by its pre-edit activation shift
// W0 (k_variant - k_canonical) and under its perturbed readout.
DenseVector hki_centroid(const AssociativeMemory& m, const Fact& fact,
                         const DenseVector& canonical_key, const DenseVector& v,
                         double variant_strength);

// Joint optimization where every relation contributes its robust centroid
// instead of its raw gradient.
ValueOptimizationResult optimize_value_hki(const AssociativeMemory& m, const SubjectGroup& group,
                                           const OptimizerConfig& cfg, double variant_strength);

// P = U U^T over eigenvectors of c whose eigenvalue is <= cutoff * lambda_max.
DenseMatrix null_space_projector(const DenseMatrix& c, double eigen_cutoff);

// Closed-form batch update: delta_w = (V - W0 K) K^T (C_rule + K K^T)^{-1},
// with the projector applied on the right for the NullSpace rule.
EditOutcome compute_update(const AssociativeMemory& m, const DenseMatrix& keys,
                           const DenseMatrix& values, const UpdateRule& rule);

AssociativeMemory apply_edit(const AssociativeMemory& m, const EditOutcome& outcome);

struct FactEfficacy {
    std::string subject_id;
    std::string relation_id;
    bool converged = false;
    bool canonical_ok = false;
    std::vector<bool> variant_ok;
};

struct GroupEditResult {
    AssociativeMemory memory;
    EditOutcome outcome;
    std::vector<FactEfficacy> efficacy;
};

// Full pipeline: optimize one value column per fact (isolated) or per subject
// (joint / hki), assemble K and V, apply the closed-form update, then re-check
// every fact's argmax at its canonical key and at each variant key.
GroupEditResult edit_subject_groups(const AssociativeMemory& m,
                                    const std::vector<SubjectGroup>& groups,
                                    const UpdateRule& rule, const OptimizerConfig& cfg,
                                    EditStrategy strategy, double variant_strength = 0.0);

} // namespace editlab
