#include "editlab/experiments.hpp"

#include "editlab/errors.hpp"
#include "editlab/rng.hpp"

#include <Eigen/Dense>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <sstream>
#include <thread>

namespace editlab {

namespace {

using nlohmann::json;

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const std::size_t workers = std::min(configured_threads(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    for (auto& t : pool) t.join();
}

UpdateRule make_rule(const RuleConfig& rc, const DenseMatrix& covariance) {
    if (rc.kind == "identity") return IdentityRule{};
    if (rc.kind == "covariance") return CovarianceRule{covariance};
    return NullSpaceRule{covariance, rc.eigen_cutoff};
}

DenseVector column_of(const DenseMatrix& m, std::size_t j) {
    DenseVector v(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) v[i] = m(i, j);
    return v;
}

std::vector<std::string> csv_row(std::initializer_list<std::string> cells) { return cells; }

// --- individual experiments ---------------------------------------------------

void experiment_conflict_distribution(const ExperimentConfig& cfg, RunReport& report) {
    SynthSuite suite = gen_suite(cfg.synth);
    report.geometry.conflicts = conflict_distribution(suite.memory, suite.groups);

    report.summary["mean_conflict"] = report.geometry.conflicts.mean;
    report.summary["stddev_conflict"] = report.geometry.conflicts.stddev;
    report.summary["min_conflict"] = report.geometry.conflicts.min;
    report.summary["max_conflict"] = report.geometry.conflicts.max;

    CsvTable table;
    table.header = {"subject_id", "fact_a", "fact_b", "score"};
    for (const auto& p : report.geometry.conflicts.pairs)
        table.rows.push_back(csv_row({p.subject_id, std::to_string(p.fact_a),
                                      std::to_string(p.fact_b), format_double(p.score)}));
    report.series["conflict_scores"] = std::move(table);
}

void experiment_radius_collapse(const ExperimentConfig& cfg, RunReport& report) {
    SynthSuite suite = gen_suite(cfg.synth);
    const UpdateRule rule = make_rule(cfg.rule, suite.covariance);

    StrategyRunMetrics joint = run_strategy_pipeline(suite, EditStrategy::joint, rule,
                                                     cfg.optimizer, cfg.tolerance, 0.0,
                                                     cfg.tolerance.seed);
    StrategyRunMetrics isolated = run_strategy_pipeline(suite, EditStrategy::isolated, rule,
                                                        cfg.optimizer, cfg.tolerance, 0.0,
                                                        cfg.tolerance.seed);

    CsvTable table;
    table.header = {"arm", "id", "radius"};
    for (std::size_t s = 0; s < suite.groups.size(); ++s) {
        report.geometry.radii.push_back({suite.groups[s].subject_id, joint.radii[s]});
        table.rows.push_back(
            csv_row({"joint", suite.groups[s].subject_id, format_double(joint.radii[s])}));
    }
    std::size_t idx = 0;
    for (const SubjectGroup& group : suite.groups)
        for (const Fact& fact : group.facts)
            table.rows.push_back(csv_row({"isolated", fact.readout.relation_id,
                                          format_double(isolated.radii[idx++])}));

    report.summary["median_r_joint"] = joint.median_radius;
    report.summary["median_r_isolated"] = isolated.median_radius;
    report.summary["collapse_ratio"] =
        isolated.median_radius > 0.0 ? joint.median_radius / isolated.median_radius : 0.0;
    report.series["radii"] = std::move(table);
}

void experiment_covariance_trap(const ExperimentConfig& cfg, RunReport& report) {
    SynthSuite suite = gen_suite(cfg.synth);

    DenseMatrix keys(cfg.synth.d_k, suite.groups.size());
    for (std::size_t s = 0; s < suite.groups.size(); ++s)
        for (std::size_t i = 0; i < cfg.synth.d_k; ++i) keys(i, s) = suite.groups[s].key[i];

    constexpr std::size_t kDeltaCount = 200;
    std::vector<DenseVector> deltas;
    for (const SubjectGroup& group : suite.groups) {
        for (const Fact& fact : group.facts)
            for (const PromptVariant& variant : fact.variants) {
                if (deltas.size() >= kDeltaCount) break;
                deltas.push_back(subtract(variant.key, group.key));
            }
        if (deltas.size() >= kDeltaCount) break;
    }

    report.geometry.amplification = amplification_analysis(suite.covariance, keys, deltas);
    const AmplificationStats& amp = report.geometry.amplification;

    // Exact diagonal check: a delta on the minor eigendirection of C with no
    // keys in the update sees the full 1/lambda_min amplification.
    SymEigen eig = sym_eigen(suite.covariance);
    DenseVector minor_axis(cfg.synth.d_k);
    for (std::size_t i = 0; i < cfg.synth.d_k; ++i) minor_axis[i] = eig.eigenvectors(i, 0);
    DenseMatrix no_keys(cfg.synth.d_k, 0);
    const double aligned_r_cov = smw_apply(suite.covariance, no_keys, minor_axis).norm2();
    const double aligned_r_id =
        smw_apply(DenseMatrix::identity(cfg.synth.d_k), no_keys, minor_axis).norm2();

    report.summary["median_r_cov"] = amp.median_r_cov;
    report.summary["median_r_id"] = amp.median_r_id;
    report.summary["amplified_count"] = amp.amplified_count;
    report.summary["lambda_max_c_inv"] = amp.lambda_max_c_inv;
    report.summary["kappa_c"] = amp.kappa_c;
    report.summary["aligned_r_cov"] = aligned_r_cov;
    report.summary["aligned_r_id"] = aligned_r_id;

    CsvTable table;
    table.header = {"delta_index", "r_cov", "r_id", "delta_proj"};
    for (std::size_t i = 0; i < amp.r_cov.size(); ++i)
        table.rows.push_back(csv_row({std::to_string(i), format_double(amp.r_cov[i]),
                                      format_double(amp.r_id[i]),
                                      format_double(amp.delta_proj_norms[i])}));
    report.series["amplification"] = std::move(table);
}

void experiment_key_orthogonality(const ExperimentConfig& cfg, RunReport& report) {
    SynthSuite suite = gen_suite(cfg.synth);
    const std::size_t shown = std::min<std::size_t>(8, suite.groups.size());

    std::vector<std::pair<std::string, std::vector<DenseVector>>> labeled;
    for (std::size_t s = 0; s < shown; ++s) {
        const SubjectGroup& group = suite.groups[s];
        labeled.push_back({"S" + std::to_string(s), {group.key}});
        for (std::size_t v = 0; v < cfg.synth.variants_per_fact; ++v) {
            std::vector<DenseVector> form_keys;
            for (const Fact& fact : group.facts) form_keys.push_back(fact.variants[v].key);
            labeled.push_back({"S" + std::to_string(s) + "F" + std::to_string(v),
                               std::move(form_keys)});
        }
    }
    report.geometry.similarity = key_similarity_blocks(labeled);

    const SimilarityBlocks& blocks = report.geometry.similarity;
    const std::size_t per_subject = 1 + cfg.synth.variants_per_fact;
    double canon_variant_sum = 0.0;
    std::size_t canon_variant_count = 0;
    double cross_sum_abs = 0.0, cross_max_abs = 0.0;
    std::size_t cross_count = 0;
    for (std::size_t a = 0; a < blocks.labels.size(); ++a)
        for (std::size_t b = 0; b < blocks.labels.size(); ++b) {
            if (a == b) continue;
            const bool same_subject = a / per_subject == b / per_subject;
            if (same_subject && (a % per_subject == 0 || b % per_subject == 0)) {
                canon_variant_sum += blocks.means(a, b);
                ++canon_variant_count;
            } else if (!same_subject) {
                cross_sum_abs += std::abs(blocks.means(a, b));
                cross_max_abs = std::max(cross_max_abs, std::abs(blocks.means(a, b)));
                ++cross_count;
            }
        }
    report.summary["mean_canonical_variant_cosine"] =
        canon_variant_sum / static_cast<double>(canon_variant_count);
    report.summary["mean_cross_subject_abs"] = cross_sum_abs / static_cast<double>(cross_count);
    report.summary["max_cross_subject_abs"] = cross_max_abs;

    CsvTable table;
    table.header.push_back("label");
    for (const std::string& l : blocks.labels) table.header.push_back(l);
    for (std::size_t r = 0; r < blocks.labels.size(); ++r) {
        std::vector<std::string> row{blocks.labels[r]};
        for (std::size_t c = 0; c < blocks.labels.size(); ++c)
            row.push_back(format_double(blocks.means(r, c)));
        table.rows.push_back(std::move(row));
    }
    report.series["similarity_blocks"] = std::move(table);
}

void experiment_locality_check(const ExperimentConfig& cfg, RunReport& report) {
    SynthSuite suite = gen_suite(cfg.synth);

    GroupEditResult identity_edit = edit_subject_groups(suite.memory, suite.groups, IdentityRule{},
                                                        cfg.optimizer, EditStrategy::joint);
    GroupEditResult covariance_edit =
        edit_subject_groups(suite.memory, suite.groups, CovarianceRule{suite.covariance},
                            cfg.optimizer, EditStrategy::joint);

    const DenseMatrix& keys = identity_edit.outcome.keys;
    SpdSolver gram(matmul(keys.transposed(), keys));

    CsvTable table;
    table.header = {"kind", "id", "deviation"};

    // Exactly orthogonal probes: holdouts with their span(K) component removed.
    double exact_max_normalized = 0.0;
    const double dw_norm = identity_edit.outcome.delta_w.frobenius_norm();
    for (std::size_t h = 0; h < suite.holdout_keys.size(); ++h) {
        const DenseVector& holdout = suite.holdout_keys[h];
        DenseVector coeffs = gram.solve(matvec_transposed(keys, holdout));
        DenseVector k_old = subtract(holdout, matvec(keys, coeffs));
        const double dev = locality_deviation(identity_edit.outcome.delta_w, k_old);
        exact_max_normalized =
            std::max(exact_max_normalized, dev / (dw_norm * k_old.norm2()));
        table.rows.push_back(
            csv_row({"orthogonalized", "h" + std::to_string(h), format_double(dev)}));
    }

    // Statistical probes: raw gaussian holdouts against the edited keys.
    std::vector<double> holdout_devs, edited_devs, cov_holdout_devs;
    for (std::size_t h = 0; h < suite.holdout_keys.size(); ++h) {
        const double dev = locality_deviation(identity_edit.outcome.delta_w,
                                              suite.holdout_keys[h]);
        holdout_devs.push_back(dev);
        cov_holdout_devs.push_back(
            locality_deviation(covariance_edit.outcome.delta_w, suite.holdout_keys[h]));
        table.rows.push_back(csv_row({"holdout", "h" + std::to_string(h), format_double(dev)}));
    }
    for (std::size_t s = 0; s < suite.groups.size(); ++s) {
        const double dev =
            locality_deviation(identity_edit.outcome.delta_w, suite.groups[s].key);
        edited_devs.push_back(dev);
        table.rows.push_back(
            csv_row({"edited", suite.groups[s].subject_id, format_double(dev)}));
    }

    report.summary["exact_max_normalized_deviation"] = exact_max_normalized;
    report.summary["median_holdout_deviation"] = median(holdout_devs);
    report.summary["median_edited_deviation"] = median(edited_devs);
    report.summary["holdout_to_edited_ratio"] = median(holdout_devs) / median(edited_devs);
    report.summary["median_holdout_deviation_covariance_rule"] = median(cov_holdout_devs);
    report.series["locality"] = std::move(table);
}

void experiment_editor_compare(const ExperimentConfig& cfg, RunReport& report) {
    SynthSuite suite = gen_suite(cfg.synth);

    struct Arm {
        std::string name;
        EditStrategy strategy;
        UpdateRule rule;
        double strength;
    };
    const std::vector<Arm> arms = {
        {"isolated+covariance", EditStrategy::isolated, CovarianceRule{suite.covariance}, 0.0},
        {"joint+covariance", EditStrategy::joint, CovarianceRule{suite.covariance}, 0.0},
        {"joint+identity", EditStrategy::joint, IdentityRule{}, 0.0},
        {"hki+identity", EditStrategy::hki, IdentityRule{}, cfg.synth.variant_strength},
    };

    CsvTable table;
    table.header = {"arm", "subject_id", "relation_id", "converged", "canonical_ok",
                    "variant_ok", "variant_total"};
    json arms_summary = json::object();
    for (const Arm& arm : arms) {
        GroupEditResult result = edit_subject_groups(suite.memory, suite.groups, arm.rule,
                                                     cfg.optimizer, arm.strategy, arm.strength);
        std::size_t canonical_ok = 0, variant_ok = 0, variant_total = 0, converged = 0;
        for (const FactEfficacy& eff : result.efficacy) {
            canonical_ok += eff.canonical_ok ? 1 : 0;
            converged += eff.converged ? 1 : 0;
            std::size_t ok = 0;
            for (bool v : eff.variant_ok) ok += v ? 1 : 0;
            variant_ok += ok;
            variant_total += eff.variant_ok.size();
            table.rows.push_back(csv_row({arm.name, eff.subject_id, eff.relation_id,
                                          eff.converged ? "1" : "0",
                                          eff.canonical_ok ? "1" : "0", std::to_string(ok),
                                          std::to_string(eff.variant_ok.size())}));
        }
        const double n_facts = static_cast<double>(result.efficacy.size());
        arms_summary[arm.name] = {
            {"canonical_rate", static_cast<double>(canonical_ok) / n_facts},
            {"variant_rate",
             variant_total > 0
                 ? static_cast<double>(variant_ok) / static_cast<double>(variant_total)
                 : 0.0},
            {"converged_rate", static_cast<double>(converged) / n_facts},
        };
    }
    report.efficacy = arms_summary;
    report.summary["baseline_variant_rate"] =
        arms_summary["joint+covariance"]["variant_rate"];
    report.summary["full_variant_rate"] = arms_summary["hki+identity"]["variant_rate"];
    report.series["efficacy"] = std::move(table);
}

void experiment_nullspace_equivalence(const ExperimentConfig& cfg, RunReport& report) {
    SynthConfig synth = cfg.synth;
    synth.key_mode = KeyMode::orthogonalized;
    SynthSuite suite = gen_suite(synth);

    const std::size_t d = synth.d_k;
    const std::size_t batch = suite.groups.size();

    // Covariance whose null space is exactly the span of the edit keys: basis
    // from a QR whose leading columns are the keys, near-zero eigenvalues on
    // those directions, a power law on the complement kept above the cutoff.
    Eigen::MatrixXd basis_seed(d, d);
    for (std::size_t j = 0; j < batch; ++j)
        for (std::size_t i = 0; i < d; ++i)
            basis_seed(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                suite.groups[j].key[i];
    Rng rng = Rng::child_of(cfg.seed, "nullspace-basis");
    for (std::size_t j = batch; j < d; ++j)
        for (std::size_t i = 0; i < d; ++i)
            basis_seed(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                rng.gaussian();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(basis_seed);
    Eigen::MatrixXd q = qr.householderQ();

    const double cutoff = cfg.rule.eigen_cutoff;
    const double lambda_null = 1e-9;
    const double lambda_floor = std::max(2.0 * cutoff, 1e-3);
    Eigen::VectorXd lambda(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i) {
        if (i < batch) {
            lambda(static_cast<Eigen::Index>(i)) = lambda_null;
        } else {
            const double decayed =
                std::pow(static_cast<double>(i - batch + 1), -cfg.synth.spectrum.decay);
            lambda(static_cast<Eigen::Index>(i)) = std::max(decayed, lambda_floor);
        }
    }
    Eigen::MatrixXd c_eigen = q * lambda.asDiagonal() * q.transpose();
    c_eigen = 0.5 * (c_eigen + c_eigen.transpose().eval());
    DenseMatrix c(d, d);
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t cc = 0; cc < d; ++cc)
            c(r, cc) = c_eigen(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(cc));

    DenseMatrix p = null_space_projector(c, cutoff);
    const double idempotence = subtract(matmul(p, p), p).frobenius_norm();

    double max_key_projection_error = 0.0;
    for (const SubjectGroup& group : suite.groups) {
        const DenseVector projected = matvec(p, group.key);
        max_key_projection_error =
            std::max(max_key_projection_error,
                     subtract(projected, group.key).norm2() / group.key.norm2());
    }

    GroupEditResult cov_edit = edit_subject_groups(suite.memory, suite.groups, CovarianceRule{c},
                                                   cfg.optimizer, EditStrategy::joint);
    GroupEditResult ns_edit =
        edit_subject_groups(suite.memory, suite.groups, NullSpaceRule{c, cutoff}, cfg.optimizer,
                            EditStrategy::joint);
    const double rel_diff =
        subtract(ns_edit.outcome.delta_w, cov_edit.outcome.delta_w).frobenius_norm() /
        cov_edit.outcome.delta_w.frobenius_norm();

    report.summary["projector_idempotence_error"] = idempotence;
    report.summary["max_key_projection_error"] = max_key_projection_error;
    report.summary["update_rel_diff"] = rel_diff;
    report.summary["eigen_cutoff"] = cutoff;

    CsvTable table;
    table.header = {"metric", "value"};
    table.rows.push_back(csv_row({"projector_idempotence_error", format_double(idempotence)}));
    table.rows.push_back(
        csv_row({"max_key_projection_error", format_double(max_key_projection_error)}));
    table.rows.push_back(csv_row({"update_rel_diff", format_double(rel_diff)}));
    report.series["nullspace"] = std::move(table);
}

void experiment_d_le_r_restoration(const ExperimentConfig& cfg, RunReport& report) {
    SynthSuite suite = gen_suite(cfg.synth);

    const std::uint64_t radius_seed = cfg.tolerance.seed;
    StrategyRunMetrics baseline =
        run_strategy_pipeline(suite, EditStrategy::joint, CovarianceRule{suite.covariance},
                              cfg.optimizer, cfg.tolerance, 0.0, radius_seed);
    StrategyRunMetrics full =
        run_strategy_pipeline(suite, EditStrategy::hki, IdentityRule{}, cfg.optimizer,
                              cfg.tolerance, cfg.synth.variant_strength, radius_seed);

    report.summary["fraction_d_le_r_baseline"] = baseline.fraction_d_le_r;
    report.summary["fraction_d_le_r_full"] = full.fraction_d_le_r;
    report.summary["restored"] = full.fraction_d_le_r > baseline.fraction_d_le_r;
    report.summary["median_r_joint"] = baseline.median_radius;
    report.summary["median_r_hki"] = full.median_radius;

    for (std::size_t s = 0; s < suite.groups.size(); ++s)
        report.geometry.radii.push_back({suite.groups[s].subject_id, full.radii[s]});
    for (std::size_t i = 0; i < full.deviations.size(); ++i)
        report.geometry.deviations.push_back(
            {full.deviation_ids[i], "variant", full.deviations[i]});

    CsvTable table;
    table.header = {"arm", "id", "d", "r", "d_le_r"};
    auto emit_arm = [&](const char* arm, const StrategyRunMetrics& metrics) {
        const std::size_t per_subject =
            metrics.deviations.size() / std::max<std::size_t>(1, metrics.radii.size());
        for (std::size_t i = 0; i < metrics.deviations.size(); ++i) {
            const double r = metrics.radii[per_subject > 0 ? i / per_subject : 0];
            table.rows.push_back(csv_row({arm, metrics.deviation_ids[i],
                                          format_double(metrics.deviations[i]), format_double(r),
                                          metrics.deviation_within_radius[i] ? "1" : "0"}));
        }
    };
    emit_arm("joint+covariance", baseline);
    emit_arm("hki+identity", full);
    report.series["d_vs_r"] = std::move(table);
}

using ExperimentFn = void (*)(const ExperimentConfig&, RunReport&);

const std::vector<std::pair<std::string, ExperimentFn>>& registry() {
    static const std::vector<std::pair<std::string, ExperimentFn>> entries = {
        {"conflict-distribution", experiment_conflict_distribution},
        {"covariance-trap", experiment_covariance_trap},
        {"d-le-r-restoration", experiment_d_le_r_restoration},
        {"editor-compare", experiment_editor_compare},
        {"key-orthogonality", experiment_key_orthogonality},
        {"locality-check", experiment_locality_check},
        {"nullspace-equivalence", experiment_nullspace_equivalence},
        {"radius-collapse", experiment_radius_collapse},
    };
    return entries;
}

} // namespace

std::size_t configured_threads() {
    const char* env = std::getenv("EDITLAB_THREADS");
    if (!env) return 1;
    const long n = std::strtol(env, nullptr, 10);
    return n > 1 ? static_cast<std::size_t>(n) : 1;
}

std::vector<std::string> registered_experiments() {
    std::vector<std::string> names;
    for (const auto& [name, fn] : registry()) names.push_back(name);
    return names;
}

ExperimentConfig resolve_config(const ExperimentConfig& cfg) {
    ExperimentConfig resolved = cfg;
    if (resolved.synth.seed == 0) resolved.synth.seed = seeds::child(resolved.seed, "synth");
    if (resolved.tolerance.seed == 0)
        resolved.tolerance.seed = seeds::child(resolved.seed, "tolerance");
    return resolved;
}

StrategyRunMetrics run_strategy_pipeline(const SynthSuite& suite, EditStrategy strategy,
                                         const UpdateRule& rule, const OptimizerConfig& optimizer,
                                         const ToleranceConfig& tolerance,
                                         double variant_strength, std::uint64_t radius_seed) {
    StrategyRunMetrics metrics;
    GroupEditResult result =
        edit_subject_groups(suite.memory, suite.groups, rule, optimizer, strategy,
                            variant_strength);

    if (strategy == EditStrategy::isolated) {
        // Per-fact columns: each fact's radius is measured in isolation.
        std::size_t col = 0;
        std::vector<std::pair<SubjectGroup, DenseVector>> cases;
        for (const SubjectGroup& group : suite.groups)
            for (const Fact& fact : group.facts)
                cases.push_back({SubjectGroup{group.subject_id, group.key, {fact}},
                                 column_of(result.outcome.optimized_values, col++)});
        metrics.radii.resize(cases.size());
        parallel_for(cases.size(), [&](std::size_t i) {
            ToleranceConfig tol = tolerance;
            tol.seed = seeds::child(radius_seed, "radius", i);
            metrics.radii[i] = tolerance_radius(result.memory, cases[i].first, cases[i].second,
                                                tol);
        });
    } else {
        metrics.radii.resize(suite.groups.size());
        parallel_for(suite.groups.size(), [&](std::size_t s) {
            ToleranceConfig tol = tolerance;
            tol.seed = seeds::child(radius_seed, "radius", s);
            metrics.radii[s] = tolerance_radius(result.memory, suite.groups[s],
                                                column_of(result.outcome.optimized_values, s),
                                                tol);
        });
    }
    metrics.median_radius = median(metrics.radii);

    std::size_t within = 0;
    for (std::size_t s = 0; s < suite.groups.size(); ++s) {
        const SubjectGroup& group = suite.groups[s];
        // Deviations compare against the subject's radius; for isolated runs
        // that is the subject's per-fact radius in fact order.
        std::size_t fact_idx = 0;
        for (const Fact& fact : group.facts) {
            double radius;
            if (strategy == EditStrategy::isolated) {
                std::size_t base = 0;
                for (std::size_t prev = 0; prev < s; ++prev)
                    base += suite.groups[prev].facts.size();
                radius = metrics.radii[base + fact_idx];
            } else {
                radius = metrics.radii[s];
            }
            for (std::size_t v = 0; v < fact.variants.size(); ++v) {
                const double d = activation_deviation(result.outcome.delta_w, group.key,
                                                      fact.variants[v].key);
                metrics.deviations.push_back(d);
                metrics.deviation_ids.push_back(fact.readout.relation_id + ":v" +
                                                std::to_string(v));
                metrics.deviation_within_radius.push_back(d <= radius);
                within += d <= radius ? 1 : 0;
            }
            ++fact_idx;
        }
    }
    metrics.fraction_d_le_r =
        metrics.deviations.empty()
            ? 0.0
            : static_cast<double>(within) / static_cast<double>(metrics.deviations.size());

    std::size_t canonical_ok = 0, variant_ok = 0, variant_total = 0, converged = 0;
    for (const FactEfficacy& eff : result.efficacy) {
        canonical_ok += eff.canonical_ok ? 1 : 0;
        converged += eff.converged ? 1 : 0;
        for (bool ok : eff.variant_ok) {
            variant_ok += ok ? 1 : 0;
            ++variant_total;
        }
    }
    const double n_facts = static_cast<double>(result.efficacy.size());
    metrics.canonical_rate = static_cast<double>(canonical_ok) / n_facts;
    metrics.converged_rate = static_cast<double>(converged) / n_facts;
    metrics.variant_rate =
        variant_total > 0 ? static_cast<double>(variant_ok) / static_cast<double>(variant_total)
                          : 0.0;
    return metrics;
}

RunReport execute_experiment(const ExperimentConfig& raw_cfg) {
    validate_config(raw_cfg);
    const ExperimentConfig cfg = resolve_config(raw_cfg);

    ExperimentFn fn = nullptr;
    for (const auto& [name, candidate] : registry())
        if (name == cfg.experiment) fn = candidate;
    if (!fn) {
        std::ostringstream msg;
        msg << "unknown experiment '" << cfg.experiment << "'; registered:";
        for (const auto& name : registered_experiments()) msg << " " << name;
        throw ConfigError(msg.str());
    }

    RunReport report;
    report.experiment = cfg.experiment;
    report.seed = cfg.seed;
    report.config_echo = config_to_json(cfg);

    const auto t0 = std::chrono::steady_clock::now();
    fn(cfg, report);
    report.timings["run"] = seconds_since(t0);
    return report;
}

RunReport run_experiment(const ExperimentConfig& cfg) {
    RunReport report = execute_experiment(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    emit_report(report, cfg.output_dir.empty() ? "out" : cfg.output_dir);
    report.timings["emit"] = seconds_since(t0);
    return report;
}

} // namespace editlab
