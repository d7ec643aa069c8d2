#include "editlab/synth.hpp"

#include "editlab/errors.hpp"
#include "editlab/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <sstream>

namespace editlab {

namespace {

DenseVector gaussian_vector(Rng& rng, std::size_t d) {
    DenseVector v(d);
    for (std::size_t i = 0; i < d; ++i) v[i] = rng.gaussian();
    return v;
}

void normalize_to(DenseVector& v, double target_norm) {
    const double n = v.norm2();
    if (n == 0.0) throw DegenerateInputError("normalize_to: zero vector");
    const double s = target_norm / n;
    for (std::size_t i = 0; i < v.dim(); ++i) v[i] *= s;
}

void validate_spectrum(const SpectrumSpec& spec) {
    if (spec.d < 1) throw ConfigError("spectrum: dimension must be >= 1");
    if (!(spec.lambda_max > 0.0)) throw ConfigError("spectrum: lambda_max must be > 0");
    if (spec.decay < 0.0) throw ConfigError("spectrum: decay must be >= 0");
    if (spec.condition_cap < 1.0) throw ConfigError("spectrum: condition_cap must be >= 1");
}

} // namespace

std::vector<DenseVector> gen_subject_keys(std::size_t n, std::size_t d, KeyMode mode,
                                          std::uint64_t seed) {
    if (n < 1 || d < 1) throw ConfigError("gen_subject_keys: n and d must be >= 1");
    if (mode == KeyMode::orthogonalized && n > d) {
        std::ostringstream msg;
        msg << "gen_subject_keys: cannot fit " << n << " orthogonal keys in dimension " << d;
        throw CapacityError(msg.str());
    }

    const double target_norm = std::sqrt(static_cast<double>(d));
    std::vector<DenseVector> keys;
    keys.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng = Rng::child_of(seed, "subject-key", i);
        DenseVector k = gaussian_vector(rng, d);
        if (mode == KeyMode::orthogonalized) {
            // Two Gram-Schmidt passes hold pairwise cosines below 1e-10 even
            // at d in the hundreds.
            for (int pass = 0; pass < 2; ++pass)
                for (const DenseVector& prev : keys) {
                    const double coeff = dot(k, prev) / dot(prev, prev);
                    k = add_scaled(k, -coeff, prev);
                }
        }
        normalize_to(k, target_norm);
        keys.push_back(std::move(k));
    }
    return keys;
}

DenseVector gen_prompt_variant_key(const DenseVector& k_o, double target_cos,
                                   std::uint64_t seed) {
    if (k_o.norm2() == 0.0) throw DegenerateInputError("gen_prompt_variant_key: zero key");
    if (!(target_cos > -1.0 && target_cos <= 1.0))
        throw ConfigError("gen_prompt_variant_key: target cosine must be in (-1, 1]");
    if (target_cos == 1.0) return k_o;

    const double norm = k_o.norm2();
    Rng rng(seed);
    DenseVector u = gaussian_vector(rng, k_o.dim());
    for (int pass = 0; pass < 2; ++pass)
        u = add_scaled(u, -dot(u, k_o) / (norm * norm), k_o);
    normalize_to(u, 1.0);

    const double sin_theta = std::sqrt(std::max(0.0, 1.0 - target_cos * target_cos));
    DenseVector variant = scale(k_o, target_cos);
    return add_scaled(variant, sin_theta * norm, u);
}

DenseMatrix gen_anisotropic_covariance(const SpectrumSpec& spec, std::uint64_t seed) {
    validate_spectrum(spec);
    const auto d = static_cast<Eigen::Index>(spec.d);

    Rng rng = Rng::child_of(seed, "covariance-basis");
    Eigen::MatrixXd raw(d, d);
    for (Eigen::Index r = 0; r < d; ++r)
        for (Eigen::Index c = 0; c < d; ++c) raw(r, c) = rng.gaussian();

    Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
    Eigen::MatrixXd q = qr.householderQ();
    Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < d; ++j)
        if (r(j, j) < 0.0) q.col(j) = -q.col(j);

    const double floor = spec.lambda_max / spec.condition_cap;
    Eigen::VectorXd lambda(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        const double decayed =
            spec.lambda_max * std::pow(static_cast<double>(i + 1), -spec.decay);
        lambda(i) = std::max(decayed, floor);
    }

    Eigen::MatrixXd c = q * lambda.asDiagonal() * q.transpose();
    c = 0.5 * (c + c.transpose().eval());

    DenseMatrix out(spec.d, spec.d);
    for (Eigen::Index rr = 0; rr < d; ++rr)
        for (Eigen::Index cc = 0; cc < d; ++cc)
            out(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)) = c(rr, cc);
    return out;
}

SynthSuite gen_suite(const SynthConfig& cfg) {
    if (cfg.d_k < 1 || cfg.d_v < 1) throw ConfigError("gen_suite: dimensions must be >= 1");
    if (cfg.vocab < 2) throw ConfigError("gen_suite: vocab must be >= 2");
    if (cfg.n_subjects < 1 || cfg.relations_per_subject < 1 || cfg.variants_per_fact < 1)
        throw ConfigError("gen_suite: counts must be >= 1");
    if (!(cfg.variant_cosine > -1.0 && cfg.variant_cosine <= 1.0))
        throw ConfigError("gen_suite: variant_cosine must be in (-1, 1]");
    if (cfg.variant_strength < 0.0)
        throw ConfigError("gen_suite: variant_strength must be >= 0");

    SpectrumSpec spectrum = cfg.spectrum;
    if (spectrum.d == 0) spectrum.d = cfg.d_k;
    if (spectrum.d != cfg.d_k)
        throw ConfigError("gen_suite: spectrum dimension must match d_k");

    SynthSuite suite;

    Rng rng_w = Rng::child_of(cfg.seed, "w0");
    const double w_scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_k));
    DenseMatrix w0(cfg.d_v, cfg.d_k);
    for (double& v : w0.data()) v = w_scale * rng_w.gaussian();
    suite.memory = AssociativeMemory{std::move(w0)};

    const std::uint64_t key_seed = seeds::child(cfg.seed, "subject-keys");
    std::vector<DenseVector> keys =
        gen_subject_keys(cfg.n_subjects, cfg.d_k, cfg.key_mode, key_seed);
    suite.holdout_keys = gen_subject_keys(cfg.n_subjects, cfg.d_k, KeyMode::gaussian,
                                          seeds::child(cfg.seed, "holdout-keys"));

    suite.covariance = gen_anisotropic_covariance(spectrum, seeds::child(cfg.seed, "covariance"));

    const double readout_sd = kReadoutRowNorm / std::sqrt(static_cast<double>(cfg.d_v));
    for (std::size_t s = 0; s < cfg.n_subjects; ++s) {
        SubjectGroup group;
        group.subject_id = "s" + std::to_string(s);
        group.key = keys[s];
        for (std::size_t r = 0; r < cfg.relations_per_subject; ++r) {
            const std::uint64_t fact_index = s * cfg.relations_per_subject + r;

            Fact fact;
            fact.readout.relation_id = group.subject_id + ":r" + std::to_string(r);
            fact.readout.e = DenseMatrix(cfg.vocab, cfg.d_v);
            Rng rng_e = Rng::child_of(cfg.seed, "readout", fact_index);
            for (double& v : fact.readout.e.data()) v = readout_sd * rng_e.gaussian();

            Rng rng_t = Rng::child_of(cfg.seed, "target", fact_index);
            fact.target_token = rng_t.uniform_index(cfg.vocab);

            for (std::size_t p = 0; p < cfg.variants_per_fact; ++p) {
                const std::uint64_t variant_index = fact_index * cfg.variants_per_fact + p;
                PromptVariant variant;
                variant.key = gen_prompt_variant_key(
                    group.key, cfg.variant_cosine,
                    seeds::child(cfg.seed, "variant-key", variant_index));
                variant.readout_perturbation_seed =
                    seeds::child(cfg.seed, "variant-readout", variant_index);
                variant.recorded_cosine = cosine(variant.key, group.key);
                fact.variants.push_back(std::move(variant));
            }
            group.facts.push_back(std::move(fact));
        }
        suite.groups.push_back(std::move(group));
    }
    return suite;
}

} // namespace editlab
