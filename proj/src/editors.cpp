#include "editlab/editors.hpp"

#include "editlab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

namespace editlab {

namespace {

// Shared descent core. Isolated optimization is a single-fact group, so all
// three strategies walk through here and the reduction cases are
// trajectory-identical by construction.
ValueOptimizationResult descend(const AssociativeMemory& m, const DenseVector& key,
                                const std::vector<Fact>& facts, const OptimizerConfig& cfg,
                                bool use_centroids, double variant_strength) {
    if (facts.empty()) throw DegenerateInputError("optimize_value: group has no facts");
    if (cfg.steps < 1) throw ConfigError("optimize_value: steps must be >= 1");
    if (cfg.learning_rate < 0.0 || cfg.weight_decay < 0.0)
        throw ConfigError("optimize_value: negative learning_rate or weight_decay");
    for (const Fact& f : facts) {
        if (f.target_token >= f.readout.vocab())
            throw IndexError("optimize_value: target token out of range");
        if (f.readout.value_dim() != m.value_dim())
            throw ShapeError("optimize_value: readout value dim differs from memory");
        if (use_centroids && f.variants.empty())
            throw DegenerateInputError("optimize_value: hki fact has no variants");
    }

    const DenseVector v_init = forward(m, key);
    DenseVector v = v_init;
    // Decay pulls toward the pre-edit value, normalized by its squared norm
    // so the pull is comparable across value dimensions.
    const double init_sq = v_init.norm2() * v_init.norm2();
    const double decay_scale = cfg.weight_decay / std::max(1.0, init_sq);

    auto total_loss = [&](const DenseVector& at) {
        double loss = 0.0;
        for (const Fact& f : facts) loss += nll_loss(f.readout, at, f.target_token);
        return loss;
    };
    auto all_converged = [&](const DenseVector& at) {
        for (const Fact& f : facts)
            if (predict(f.readout, at).probs[f.target_token] < cfg.convergence_prob) return false;
        return true;
    };

    ValueOptimizationResult out;
    out.loss_trace.push_back(total_loss(v));

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        if (all_converged(v)) break;

        DenseVector grad(v.dim());
        for (const Fact& f : facts) {
            DenseVector g = use_centroids
                                ? hki_centroid(m, f, key, v, variant_strength)
                                : value_gradient(f.readout, v, f.target_token);
            for (std::size_t i = 0; i < grad.dim(); ++i) grad[i] += g[i];
        }
        for (std::size_t i = 0; i < grad.dim(); ++i)
            grad[i] += decay_scale * (v[i] - v_init[i]);

        v = add_scaled(v, -cfg.learning_rate, grad);
        out.steps_taken = step + 1;

        const double loss = total_loss(v);
        if (loss > out.loss_trace.back()) out.loss_monotone = false;
        out.loss_trace.push_back(loss);
    }

    out.v_star = v;
    out.final_loss = out.loss_trace.back();
    out.converged.reserve(facts.size());
    for (const Fact& f : facts)
        out.converged.push_back(predict(f.readout, v).probs[f.target_token] >=
                                cfg.convergence_prob);
    return out;
}

} // namespace

SubjectGroup group_requests(const DenseVector& key, const std::vector<EditRequest>& requests,
                            const std::vector<RelationReadout>& readouts) {
    if (requests.empty()) throw DegenerateInputError("group_requests: no requests");
    std::unordered_map<std::string, const RelationReadout*> lookup;
    for (const RelationReadout& r : readouts) lookup[r.relation_id] = &r;

    SubjectGroup group;
    group.subject_id = requests.front().subject_id;
    group.key = key;
    for (const EditRequest& req : requests) {
        if (req.subject_id != group.subject_id)
            throw DegenerateInputError("group_requests: mixed subjects in one group");
        auto it = lookup.find(req.relation_id);
        if (it == lookup.end())
            throw DegenerateInputError("group_requests: no readout for relation " +
                                       req.relation_id);
        group.facts.push_back(Fact{*it->second, req.target_token, req.variants});
    }
    return group;
}

ValueOptimizationResult optimize_value_isolated(const AssociativeMemory& m,
                                                const RelationReadout& r, const DenseVector& key,
                                                std::size_t target, const OptimizerConfig& cfg) {
    std::vector<Fact> facts{Fact{r, target, {}}};
    return descend(m, key, facts, cfg, /*use_centroids=*/false, 0.0);
}

ValueOptimizationResult optimize_value_joint(const AssociativeMemory& m, const SubjectGroup& group,
                                             const OptimizerConfig& cfg) {
    return descend(m, group.key, group.facts, cfg, /*use_centroids=*/false, 0.0);
}

DenseVector hki_centroid(const AssociativeMemory& m, const Fact& fact,
                         const DenseVector& canonical_key, const DenseVector& v,
                         double variant_strength) {
    if (fact.variants.empty()) throw DegenerateInputError("hki_centroid: fact has no variants");

    std::vector<DenseVector> grads;
    grads.reserve(fact.variants.size());
    for (const PromptVariant& variant : fact.variants) {
        RelationReadout readout = perturbed_readout(fact.readout, variant, variant_strength);
        // The variant's prompt form shifts the pre-edit activation; the shared
        // value is evaluated at that shifted point.
        DenseVector offset = forward(m, subtract(variant.key, canonical_key));
        grads.push_back(value_gradient(readout, add(v, offset), fact.target_token));
    }
    return mean_vector(grads);
}

ValueOptimizationResult optimize_value_hki(const AssociativeMemory& m, const SubjectGroup& group,
                                           const OptimizerConfig& cfg, double variant_strength) {
    return descend(m, group.key, group.facts, cfg, /*use_centroids=*/true, variant_strength);
}

DenseMatrix null_space_projector(const DenseMatrix& c, double eigen_cutoff) {
    if (eigen_cutoff < 0.0)
        throw ConfigError("null_space_projector: eigen_cutoff must be >= 0");
    SymEigen eig = sym_eigen(c);
    const std::size_t d = c.rows();
    const double lambda_max = eig.eigenvalues.back();
    const double threshold = eigen_cutoff * lambda_max;

    DenseMatrix p(d, d);
    for (std::size_t j = 0; j < d; ++j) {
        if (eig.eigenvalues[j] > threshold) continue;
        for (std::size_t r = 0; r < d; ++r) {
            const double ur = eig.eigenvectors(r, j);
            if (ur == 0.0) continue;
            for (std::size_t cidx = 0; cidx < d; ++cidx)
                p(r, cidx) += ur * eig.eigenvectors(cidx, j);
        }
    }
    return p;
}

EditOutcome compute_update(const AssociativeMemory& m, const DenseMatrix& keys,
                           const DenseMatrix& values, const UpdateRule& rule) {
    const std::size_t d_k = m.key_dim();
    const std::size_t d_v = m.value_dim();
    if (keys.rows() != d_k) throw ShapeError("compute_update: keys rows must equal d_k");
    if (values.rows() != d_v) throw ShapeError("compute_update: values rows must equal d_v");
    if (keys.cols() != values.cols())
        throw ShapeError("compute_update: keys and values column counts differ");
    if (keys.cols() < 1) throw ShapeError("compute_update: batch must have at least one column");

    EditOutcome out;
    out.keys = keys;
    out.optimized_values = values;
    out.residual = subtract(values, matmul(m.weights, keys));

    const std::size_t batch = keys.cols();
    const bool low_rank = batch <= d_k / 4;

    // Y = (C_rule + K K^T)^{-1} K; delta_w = residual * Y^T. The low-rank
    // expansion needs a decently conditioned C: near-singular constraint
    // matrices cancel catastrophically through C^{-1}, so those go direct.
    auto solve_regularized = [&](const DenseMatrix& c, bool allow_smw) {
        if (allow_smw && low_rank) {
            SpdSolver c_solver(c);
            if (c_solver.pivot_ratio() >= 1e-6) return smw_apply_columns(c_solver, keys, keys);
        }
        DenseMatrix a = add(c, matmul(keys, keys.transposed()));
        return SpdSolver(a).solve(keys);
    };

    DenseMatrix y;
    if (const auto* cov = std::get_if<CovarianceRule>(&rule)) {
        if (cov->c.rows() != d_k || cov->c.cols() != d_k)
            throw ShapeError("compute_update: covariance dims must equal d_k");
        y = solve_regularized(cov->c, /*allow_smw=*/true);
    } else if (std::holds_alternative<IdentityRule>(rule)) {
        y = solve_regularized(DenseMatrix::identity(d_k), /*allow_smw=*/true);
    } else {
        const auto& ns = std::get<NullSpaceRule>(rule);
        if (ns.c.rows() != d_k || ns.c.cols() != d_k)
            throw ShapeError("compute_update: null-space matrix dims must equal d_k");
        // The constraint matrix may be singular on its own here; only the
        // regularized sum is factorized.
        y = solve_regularized(ns.c, /*allow_smw=*/false);
    }

    out.delta_w = matmul(out.residual, y.transposed());
    if (const auto* ns = std::get_if<NullSpaceRule>(&rule))
        out.delta_w = matmul(out.delta_w, null_space_projector(ns->c, ns->eigen_cutoff));

    out.converged.assign(batch, true);
    out.final_losses.assign(batch, 0.0);
    return out;
}

AssociativeMemory apply_edit(const AssociativeMemory& m, const EditOutcome& outcome) {
    if (outcome.delta_w.rows() != m.value_dim() || outcome.delta_w.cols() != m.key_dim())
        throw ShapeError("apply_edit: delta dims differ from memory dims");
    return AssociativeMemory{add(m.weights, outcome.delta_w)};
}

GroupEditResult edit_subject_groups(const AssociativeMemory& m,
                                    const std::vector<SubjectGroup>& groups,
                                    const UpdateRule& rule, const OptimizerConfig& cfg,
                                    EditStrategy strategy, double variant_strength) {
    GroupEditResult result;
    if (groups.empty()) {
        result.memory = m;
        return result;
    }
    for (std::size_t a = 0; a < groups.size(); ++a)
        for (std::size_t b = a + 1; b < groups.size(); ++b)
            if (groups[a].key == groups[b].key)
                throw DegenerateInputError("edit_subject_groups: subjects " +
                                           groups[a].subject_id + " and " + groups[b].subject_id +
                                           " share a key");

    struct Column {
        const SubjectGroup* group;
        ValueOptimizationResult opt;
    };
    std::vector<Column> columns;
    for (const SubjectGroup& group : groups) {
        if (group.facts.empty())
            throw DegenerateInputError("edit_subject_groups: group without facts");
        switch (strategy) {
            case EditStrategy::isolated:
                // One column per fact, all sharing the subject key: the key
                // collision of same-subject isolated editing is intentional.
                for (const Fact& f : group.facts) {
                    Column col{&group, optimize_value_isolated(m, f.readout, group.key,
                                                               f.target_token, cfg)};
                    columns.push_back(std::move(col));
                }
                break;
            case EditStrategy::joint:
                columns.push_back(Column{&group, optimize_value_joint(m, group, cfg)});
                break;
            case EditStrategy::hki:
                columns.push_back(
                    Column{&group, optimize_value_hki(m, group, cfg, variant_strength)});
                break;
        }
    }

    const std::size_t batch = columns.size();
    DenseMatrix keys(m.key_dim(), batch);
    DenseMatrix values(m.value_dim(), batch);
    for (std::size_t j = 0; j < batch; ++j) {
        for (std::size_t i = 0; i < m.key_dim(); ++i) keys(i, j) = columns[j].group->key[i];
        for (std::size_t i = 0; i < m.value_dim(); ++i)
            values(i, j) = columns[j].opt.v_star[i];
    }

    result.outcome = compute_update(m, keys, values, rule);
    for (std::size_t j = 0; j < batch; ++j) {
        bool all = true;
        for (bool c : columns[j].opt.converged) all = all && c;
        result.outcome.converged[j] = all;
        result.outcome.final_losses[j] = columns[j].opt.final_loss;
    }
    result.memory = apply_edit(m, result.outcome);

    for (const SubjectGroup& group : groups) {
        const DenseVector canonical_value = forward(result.memory, group.key);
        std::size_t fact_idx = 0;
        for (const Fact& f : group.facts) {
            FactEfficacy eff;
            eff.subject_id = group.subject_id;
            eff.relation_id = f.readout.relation_id.empty()
                                  ? "r" + std::to_string(fact_idx)
                                  : f.readout.relation_id;
            eff.canonical_ok = predict(f.readout, canonical_value).argmax == f.target_token;
            for (const PromptVariant& variant : f.variants) {
                const DenseVector value = forward(result.memory, variant.key);
                eff.variant_ok.push_back(predict(f.readout, value).argmax == f.target_token);
            }
            result.efficacy.push_back(std::move(eff));
            ++fact_idx;
        }
    }

    // Converged flags per fact, in the same order as the efficacy rows.
    std::size_t eff_idx = 0;
    for (std::size_t j = 0; j < batch; ++j) {
        const std::size_t facts_in_column =
            strategy == EditStrategy::isolated ? 1 : columns[j].group->facts.size();
        for (std::size_t f = 0; f < facts_in_column; ++f) {
            const std::size_t flag_idx = strategy == EditStrategy::isolated ? 0 : f;
            if (eff_idx < result.efficacy.size())
                result.efficacy[eff_idx++].converged = columns[j].opt.converged[flag_idx];
        }
    }
    return result;
}

} // namespace editlab
