#include "editlab/editors.hpp"

#include "editlab/errors.hpp"
#include "editlab/rng.hpp"
#include "editlab/synth.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace editlab;

namespace {

DenseMatrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double sd = 1.0) {
    DenseMatrix m(rows, cols);
    for (double& v : m.data()) v = sd * rng.gaussian();
    return m;
}

AssociativeMemory zero_memory(std::size_t d_v, std::size_t d_k) {
    return AssociativeMemory{DenseMatrix(d_v, d_k)};
}

RelationReadout scaled_identity_readout(std::size_t n, double s) {
    RelationReadout r;
    r.e = scale(DenseMatrix::identity(n), s);
    return r;
}

} // namespace

TEST_CASE("optimize_value_isolated") {
    OptimizerConfig cfg;

    SUBCASE("already converged at init: zero steps, value untouched") {
        AssociativeMemory m{DenseMatrix::identity(2)};
        RelationReadout r = scaled_identity_readout(2, 50.0);
        auto out = optimize_value_isolated(m, r, DenseVector({1, 0}), 0, cfg);
        CHECK(out.converged[0]);
        CHECK(out.steps_taken == 0);
        CHECK(out.v_star == forward(m, DenseVector({1, 0})));
    }
    SUBCASE("two-token steep readout converges with a positive target component") {
        AssociativeMemory m = zero_memory(2, 2);
        RelationReadout r = scaled_identity_readout(2, 10.0);
        auto out = optimize_value_isolated(m, r, DenseVector({1, 0}), 0, cfg);
        CHECK(out.converged[0]);
        CHECK(out.v_star[0] > 0.0);
        CHECK(predict(r, out.v_star).probs[0] >= 0.99);
    }
    SUBCASE("zero learning rate leaves the value unchanged") {
        AssociativeMemory m = zero_memory(2, 2);
        RelationReadout r = scaled_identity_readout(2, 10.0);
        OptimizerConfig frozen = cfg;
        frozen.learning_rate = 0.0;
        auto out = optimize_value_isolated(m, r, DenseVector({1, 0}), 0, frozen);
        CHECK(out.v_star == forward(m, DenseVector({1, 0})));
        CHECK(!out.converged[0]);
    }
}

TEST_CASE("optimize_value_joint") {
    OptimizerConfig cfg;
    Rng rng(55);

    SUBCASE("single-fact group is trajectory-identical to isolated") {
        AssociativeMemory m{random_matrix(rng, 8, 8, 0.3)};
        RelationReadout r;
        r.e = random_matrix(rng, 6, 8, 0.5);
        DenseVector key(8);
        for (std::size_t i = 0; i < 8; ++i) key[i] = rng.gaussian();

        SubjectGroup group{"s", key, {Fact{r, 2, {}}}};
        auto joint = optimize_value_joint(m, group, cfg);
        auto isolated = optimize_value_isolated(m, r, key, 2, cfg);
        CHECK(joint.v_star == isolated.v_star);
        CHECK(joint.loss_trace == isolated.loss_trace);
    }
    SUBCASE("duplicated fact equals a doubled-gradient descent") {
        AssociativeMemory m = zero_memory(4, 4);
        RelationReadout r;
        r.e = random_matrix(rng, 5, 4, 0.8);
        DenseVector key({1, 0, 0, 0});
        SubjectGroup twice{"s", key, {Fact{r, 1, {}}, Fact{r, 1, {}}}};
        auto joint = optimize_value_joint(m, twice, cfg);

        // Oracle: hand-rolled descent with the per-fact gradient doubled.
        DenseVector v = forward(m, key);
        const DenseVector v_init = v;
        const double decay =
            cfg.weight_decay / std::max(1.0, v_init.norm2() * v_init.norm2());
        for (std::size_t step = 0; step < cfg.steps; ++step) {
            if (predict(r, v).probs[1] >= cfg.convergence_prob) break;
            DenseVector g = scale(value_gradient(r, v, 1), 2.0);
            for (std::size_t i = 0; i < v.dim(); ++i)
                g[i] += decay * (v[i] - v_init[i]);
            v = add_scaled(v, -cfg.learning_rate, g);
        }
        CHECK(subtract(joint.v_star, v).norm2() <= 1e-12);
        CHECK(predict(r, joint.v_star).argmax == predict(r, v).argmax);
    }
    SUBCASE("several independent facts all converge at desk scale") {
        SynthConfig synth;
        synth.d_k = 96;
        synth.d_v = 64;
        synth.vocab = 50;
        synth.n_subjects = 3;
        synth.relations_per_subject = 4;
        synth.variants_per_fact = 2;
        synth.seed = 9;
        SynthSuite suite = gen_suite(synth);
        for (const SubjectGroup& group : suite.groups) {
            auto out = optimize_value_joint(suite.memory, group, cfg);
            for (bool c : out.converged) CHECK(c);
        }
    }
}

TEST_CASE("hki_centroid") {
    Rng rng(66);
    AssociativeMemory m{random_matrix(rng, 6, 10, 0.4)};
    RelationReadout r;
    r.e = random_matrix(rng, 7, 6, 0.6);
    DenseVector key(10);
    for (std::size_t i = 0; i < 10; ++i) key[i] = rng.gaussian();
    DenseVector v = forward(m, key);

    SUBCASE("variants identical to canonical reduce to the raw gradient") {
        Fact fact{r, 3, {PromptVariant{key, 1, 1.0}, PromptVariant{key, 2, 1.0}}};
        DenseVector centroid = hki_centroid(m, fact, key, v, 0.0);
        DenseVector raw = value_gradient(r, v, 3);
        CHECK(subtract(centroid, raw).norm2() == 0.0);
    }
    SUBCASE("matches the mean-of-gradients oracle at strength 0.05") {
        Fact fact{r, 3, {}};
        for (std::uint64_t p = 0; p < 8; ++p) {
            PromptVariant variant;
            variant.key = gen_prompt_variant_key(key, 0.9, 1000 + p);
            variant.readout_perturbation_seed = 2000 + p;
            variant.recorded_cosine = 0.9;
            fact.variants.push_back(variant);
        }
        DenseVector centroid = hki_centroid(m, fact, key, v, 0.05);

        DenseVector acc(v.dim());
        for (const PromptVariant& variant : fact.variants) {
            RelationReadout pr = perturbed_readout(r, variant, 0.05);
            DenseVector offset = forward(m, subtract(variant.key, key));
            DenseVector g = value_gradient(pr, add(v, offset), 3);
            for (std::size_t i = 0; i < acc.dim(); ++i) acc[i] += g[i];
        }
        DenseVector oracle = scale(acc, 1.0 / 8.0);
        CHECK(subtract(centroid, oracle).norm2() <= 1e-12);
    }
    SUBCASE("empty variant list rejected") {
        Fact fact{r, 3, {}};
        CHECK_THROWS_AS(hki_centroid(m, fact, key, v, 0.05), DegenerateInputError);
    }
}

TEST_CASE("optimize_value_hki") {
    OptimizerConfig cfg;
    Rng rng(67);

    SUBCASE("one canonical variant at zero strength is trajectory-identical to joint") {
        AssociativeMemory m{random_matrix(rng, 6, 8, 0.4)};
        RelationReadout r;
        r.e = random_matrix(rng, 9, 6, 0.7);
        DenseVector key(8);
        for (std::size_t i = 0; i < 8; ++i) key[i] = rng.gaussian();

        SubjectGroup plain{"s", key, {Fact{r, 4, {}}}};
        SubjectGroup with_variant{"s", key, {Fact{r, 4, {PromptVariant{key, 7, 1.0}}}}};
        auto joint = optimize_value_joint(m, plain, cfg);
        auto hki = optimize_value_hki(m, with_variant, cfg, 0.0);
        CHECK(joint.v_star == hki.v_star);
        CHECK(joint.loss_trace == hki.loss_trace);
    }
    SUBCASE("per-step update equals the centroid re-summation oracle") {
        SynthConfig synth;
        synth.d_k = 48;
        synth.d_v = 32;
        synth.vocab = 20;
        synth.n_subjects = 1;
        synth.relations_per_subject = 3;
        synth.variants_per_fact = 8;
        synth.seed = 31;
        SynthSuite suite = gen_suite(synth);
        const SubjectGroup& group = suite.groups[0];
        const double strength = synth.variant_strength;

        auto hki = optimize_value_hki(suite.memory, group, cfg, strength);

        DenseVector v = forward(suite.memory, group.key);
        const DenseVector v_init = v;
        const double decay =
            cfg.weight_decay / std::max(1.0, v_init.norm2() * v_init.norm2());
        for (std::size_t step = 0; step < cfg.steps; ++step) {
            bool done = true;
            for (const Fact& f : group.facts)
                done = done &&
                       predict(f.readout, v).probs[f.target_token] >= cfg.convergence_prob;
            if (done) break;
            DenseVector grad(v.dim());
            for (const Fact& f : group.facts) {
                DenseVector acc(v.dim());
                for (const PromptVariant& variant : f.variants) {
                    RelationReadout pr = perturbed_readout(f.readout, variant, strength);
                    DenseVector offset = forward(suite.memory, subtract(variant.key, group.key));
                    DenseVector g = value_gradient(pr, add(v, offset), f.target_token);
                    for (std::size_t i = 0; i < acc.dim(); ++i) acc[i] += g[i];
                }
                for (std::size_t i = 0; i < grad.dim(); ++i)
                    grad[i] += acc[i] / static_cast<double>(f.variants.size());
            }
            for (std::size_t i = 0; i < grad.dim(); ++i)
                grad[i] += decay * (v[i] - v_init[i]);
            v = add_scaled(v, -cfg.learning_rate, grad);
        }
        CHECK(subtract(hki.v_star, v).norm2() <= 1e-12);
    }
}

TEST_CASE("null_space_projector") {
    SUBCASE("rank-deficient diagonal") {
        DenseMatrix c(2, 2, {1, 0, 0, 0});
        DenseMatrix p = null_space_projector(c, 1e-6);
        CHECK(p(0, 0) == doctest::Approx(0.0));
        CHECK(p(1, 1) == doctest::Approx(1.0));
        CHECK(std::abs(p(0, 1)) <= 1e-12);
    }
    SUBCASE("cutoff >= 1 keeps every direction") {
        Rng rng(3);
        DenseMatrix raw = random_matrix(rng, 6, 6);
        DenseMatrix c = add(raw, raw.transposed());
        DenseMatrix p = null_space_projector(c, 1.0);
        CHECK(subtract(p, DenseMatrix::identity(6)).frobenius_norm() <= 1e-8);
    }
    SUBCASE("idempotent for random symmetric input") {
        Rng rng(4);
        DenseMatrix raw = random_matrix(rng, 12, 12);
        DenseMatrix c = add(raw, raw.transposed());
        DenseMatrix p = null_space_projector(c, 0.3);
        CHECK(subtract(matmul(p, p), p).frobenius_norm() <= 1e-8);
    }
}

TEST_CASE("compute_update closed forms") {
    SUBCASE("zero residual produces exactly zero delta") {
        Rng rng(8);
        AssociativeMemory m{random_matrix(rng, 4, 6, 0.5)};
        DenseMatrix k = random_matrix(rng, 6, 2);
        DenseMatrix v = matmul(m.weights, k);
        EditOutcome out = compute_update(m, k, v, IdentityRule{});
        CHECK(out.delta_w.frobenius_norm() == 0.0);
    }
    SUBCASE("identity rule on a unit key halves the raw edit") {
        AssociativeMemory m = zero_memory(2, 2);
        DenseMatrix k(2, 1, {1, 0});
        DenseMatrix v(2, 1, {2, 0});
        EditOutcome out = compute_update(m, k, v, IdentityRule{});
        CHECK(out.delta_w(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::abs(out.delta_w(0, 1)) <= 1e-14);
        CHECK(std::abs(out.delta_w(1, 0)) <= 1e-14);
        CHECK(std::abs(out.delta_w(1, 1)) <= 1e-14);
        AssociativeMemory edited = apply_edit(m, out);
        DenseVector fitted = forward(edited, DenseVector({1, 0}));
        CHECK(fitted[0] == doctest::Approx(1.0));
    }
    SUBCASE("covariance rule with c = 2I, hand-computed diagonal") {
        // (2I + e1 e1^T)^{-1} = diag(1/3, 1/2); residual (3,0) lands at 1.
        AssociativeMemory m = zero_memory(2, 2);
        DenseMatrix k(2, 1, {1, 0});
        DenseMatrix v(2, 1, {3, 0});
        EditOutcome out =
            compute_update(m, k, v, CovarianceRule{scale(DenseMatrix::identity(2), 2.0)});
        CHECK(out.delta_w(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::abs(out.delta_w(1, 1)) <= 1e-14);
    }
    SUBCASE("covariance with C = I equals the identity rule bit for bit") {
        Rng rng(12);
        AssociativeMemory m{random_matrix(rng, 6, 24, 0.4)};
        DenseMatrix k = random_matrix(rng, 24, 3);
        DenseMatrix v = random_matrix(rng, 6, 3);
        EditOutcome via_cov = compute_update(m, k, v, CovarianceRule{DenseMatrix::identity(24)});
        EditOutcome via_id = compute_update(m, k, v, IdentityRule{});
        CHECK(via_cov.delta_w == via_id.delta_w);
    }
    SUBCASE("indefinite covariance rejected") {
        AssociativeMemory m = zero_memory(2, 2);
        DenseMatrix k(2, 1, {1, 0});
        DenseMatrix v(2, 1, {1, 0});
        DenseMatrix bad(2, 2, {1, 2, 2, 1});
        CHECK_THROWS_AS(compute_update(m, k, v, CovarianceRule{bad}), DefinitenessError);
    }
    SUBCASE("shape errors") {
        AssociativeMemory m = zero_memory(2, 3);
        CHECK_THROWS_AS(compute_update(m, DenseMatrix(2, 1), DenseMatrix(2, 1), IdentityRule{}),
                        ShapeError);
        CHECK_THROWS_AS(compute_update(m, DenseMatrix(3, 2), DenseMatrix(2, 1), IdentityRule{}),
                        ShapeError);
    }
    SUBCASE("smw path agrees with the direct path") {
        // batch <= d_k/4 takes the low-rank expansion; compare against direct.
        Rng rng(14);
        AssociativeMemory m{random_matrix(rng, 5, 40, 0.3)};
        DenseMatrix k_small = random_matrix(rng, 40, 4);
        DenseMatrix v_small = random_matrix(rng, 5, 4);
        SpectrumSpec spec;
        spec.d = 40;
        spec.condition_cap = 100.0;
        DenseMatrix c = gen_anisotropic_covariance(spec, 4);
        EditOutcome smw_path = compute_update(m, k_small, v_small, CovarianceRule{c});

        DenseMatrix a = add(c, matmul(k_small, k_small.transposed()));
        DenseMatrix y = SpdSolver(a).solve(k_small);
        DenseMatrix direct = matmul(subtract(v_small, matmul(m.weights, k_small)), y.transposed());
        CHECK(subtract(smw_path.delta_w, direct).frobenius_norm() <=
              1e-9 * (direct.frobenius_norm() + 1.0));
    }
}

TEST_CASE("apply_edit") {
    Rng rng(19);
    AssociativeMemory m{random_matrix(rng, 3, 5, 0.5)};

    SUBCASE("zero delta leaves the memory equal") {
        EditOutcome out;
        out.delta_w = DenseMatrix(3, 5);
        AssociativeMemory edited = apply_edit(m, out);
        CHECK(edited.weights == m.weights);
        AssociativeMemory twice = apply_edit(edited, out);
        CHECK(twice.weights == m.weights);
    }
    SUBCASE("original memory is not mutated") {
        EditOutcome out;
        out.delta_w = random_matrix(rng, 3, 5);
        DenseMatrix before = m.weights;
        (void)apply_edit(m, out);
        CHECK(m.weights == before);
    }
    SUBCASE("fitted value matches the shrinkage oracle") {
        DenseMatrix k = random_matrix(rng, 5, 1);
        DenseMatrix v = random_matrix(rng, 3, 1);
        DenseMatrix c = scale(DenseMatrix::identity(5), 0.5);
        EditOutcome out = compute_update(m, k, v, CovarianceRule{c});
        AssociativeMemory edited = apply_edit(m, out);

        DenseVector key(5);
        for (std::size_t i = 0; i < 5; ++i) key[i] = k(i, 0);
        DenseVector got = forward(edited, key);

        // Independent route: W0 k + R K^T (C + K K^T)^{-1} k via a direct solve.
        DenseMatrix a = add(c, matmul(k, k.transposed()));
        DenseVector y = SpdSolver(a).solve(key);
        const double coeff = dot(key, y);
        DenseVector expected = forward(m, key);
        for (std::size_t i = 0; i < 3; ++i) expected[i] += out.residual(i, 0) * coeff;
        CHECK(subtract(got, expected).norm2() <= 1e-9 * (expected.norm2() + 1.0));
    }
    SUBCASE("dim mismatch") {
        EditOutcome out;
        out.delta_w = DenseMatrix(2, 5);
        CHECK_THROWS_AS(apply_edit(m, out), ShapeError);
    }
}

TEST_CASE("identity-rule locality cancellation") {
    // Exactly orthogonal unrelated key: the update cannot touch it.
    auto keys = gen_subject_keys(6, 32, KeyMode::orthogonalized, 44);
    Rng rng(45);
    AssociativeMemory m{random_matrix(rng, 8, 32, 0.2)};

    DenseMatrix k(32, 5);
    for (std::size_t j = 0; j < 5; ++j)
        for (std::size_t i = 0; i < 32; ++i) k(i, j) = keys[j][i];
    DenseMatrix v = random_matrix(rng, 8, 5);
    EditOutcome out = compute_update(m, k, v, IdentityRule{});

    const DenseVector& k_old = keys[5];
    const double deviation = matvec(out.delta_w, k_old).norm2();
    CHECK(deviation <= 1e-10 * std::max(1.0, out.delta_w.frobenius_norm() * k_old.norm2()));
}

TEST_CASE("regularization vanishes as lambda goes to zero") {
    Rng rng(50);
    AssociativeMemory m{random_matrix(rng, 6, 8, 0.4)};
    DenseMatrix k = random_matrix(rng, 8, 3); // full column rank a.s.
    DenseMatrix v = random_matrix(rng, 6, 3);

    double prev = std::numeric_limits<double>::infinity();
    for (double lambda : {1.0, 1e-2, 1e-4, 1e-6}) {
        EditOutcome out =
            compute_update(m, k, v, CovarianceRule{scale(DenseMatrix::identity(8), lambda)});
        AssociativeMemory edited = apply_edit(m, out);
        const double fit = subtract(matmul(edited.weights, k), v).frobenius_norm();
        CHECK(fit < prev);
        prev = fit;
    }
    CHECK(prev <= 1e-4);
}

TEST_CASE("edit_subject_groups") {
    OptimizerConfig cfg;

    SUBCASE("empty group list returns the memory unchanged") {
        AssociativeMemory m = zero_memory(2, 2);
        GroupEditResult result =
            edit_subject_groups(m, {}, IdentityRule{}, cfg, EditStrategy::joint);
        CHECK(result.memory.weights == m.weights);
        CHECK(result.efficacy.empty());
    }
    SUBCASE("single fact, identity rule: canonical argmax hits the target") {
        SynthConfig synth;
        synth.d_k = 256;
        synth.d_v = 256;
        synth.vocab = 100;
        synth.n_subjects = 1;
        synth.relations_per_subject = 1;
        synth.variants_per_fact = 2;
        synth.seed = 60;
        SynthSuite suite = gen_suite(synth);
        GroupEditResult result = edit_subject_groups(suite.memory, suite.groups, IdentityRule{},
                                                     cfg, EditStrategy::joint);
        REQUIRE(result.efficacy.size() == 1);
        CHECK(result.efficacy[0].converged);
        CHECK(result.efficacy[0].canonical_ok);
    }
    SUBCASE("duplicate subject keys rejected") {
        AssociativeMemory m = zero_memory(2, 2);
        RelationReadout r = scaled_identity_readout(2, 5.0);
        SubjectGroup a{"a", DenseVector({1, 0}), {Fact{r, 0, {}}}};
        SubjectGroup b{"b", DenseVector({1, 0}), {Fact{r, 1, {}}}};
        CHECK_THROWS_AS(edit_subject_groups(m, {a, b}, IdentityRule{}, cfg, EditStrategy::joint),
                        DegenerateInputError);
    }
    SUBCASE("isolated strategy emits one column per fact") {
        SynthConfig synth;
        synth.d_k = 48;
        synth.d_v = 24;
        synth.vocab = 12;
        synth.n_subjects = 2;
        synth.relations_per_subject = 3;
        synth.variants_per_fact = 2;
        synth.seed = 61;
        SynthSuite suite = gen_suite(synth);
        GroupEditResult isolated = edit_subject_groups(suite.memory, suite.groups, IdentityRule{},
                                                       cfg, EditStrategy::isolated);
        CHECK(isolated.outcome.keys.cols() == 6);
        GroupEditResult joint = edit_subject_groups(suite.memory, suite.groups, IdentityRule{},
                                                    cfg, EditStrategy::joint);
        CHECK(joint.outcome.keys.cols() == 2);
        CHECK(isolated.efficacy.size() == joint.efficacy.size());
    }
}
