#include "editlab/geometry.hpp"

#include "editlab/errors.hpp"
#include "editlab/rng.hpp"

#include <algorithm>
#include <cmath>

namespace editlab {

namespace {

DenseVector sphere_sample(Rng& rng, std::size_t dim, double radius) {
    DenseVector xi(dim);
    double norm = 0.0;
    do {
        for (std::size_t i = 0; i < dim; ++i) xi[i] = rng.gaussian();
        norm = xi.norm2();
    } while (norm == 0.0);
    const double s = radius / norm;
    for (std::size_t i = 0; i < dim; ++i) xi[i] *= s;
    return xi;
}

bool group_clears_threshold(const SubjectGroup& group, const DenseVector& value, double tau) {
    for (const Fact& f : group.facts)
        if (predict(f.readout, value).probs[f.target_token] < tau) return false;
    return true;
}

} // namespace

double median(std::vector<double> values) {
    if (values.empty()) throw DegenerateInputError("median: empty sample");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double tolerance_radius(const AssociativeMemory& m, const SubjectGroup& group,
                        const DenseVector& v_star, const ToleranceConfig& cfg) {
    if (v_star.dim() != m.value_dim())
        throw ShapeError("tolerance_radius: value dim differs from memory");
    if (group.facts.empty()) throw DegenerateInputError("tolerance_radius: group has no facts");
    if (!(cfg.tau > 0.0 && cfg.tau < 1.0)) throw ConfigError("tolerance_radius: tau out of (0,1)");
    if (cfg.trials_per_radius < 1)
        throw ConfigError("tolerance_radius: trials_per_radius must be >= 1");
    if (!(cfg.success_rate > 0.0 && cfg.success_rate <= 1.0))
        throw ConfigError("tolerance_radius: success_rate out of (0,1]");

    const double step =
        cfg.relative_step > 0.0 ? cfg.relative_step * v_star.norm2() : cfg.step;
    if (!(step > 0.0)) throw ConfigError("tolerance_radius: step must be > 0");

    if (!group_clears_threshold(group, v_star, cfg.tau)) return 0.0;

    double last_good = 0.0;
    for (std::size_t idx = 1;; ++idx) {
        const double rho = step * static_cast<double>(idx);
        if (rho > cfg.rho_max) return cfg.rho_max;

        std::size_t successes = 0;
        for (std::size_t trial = 0; trial < cfg.trials_per_radius; ++trial) {
            Rng rng(seeds::child(seeds::child(cfg.seed, "rho", idx), "trial", trial));
            const DenseVector xi = sphere_sample(rng, v_star.dim(), rho);
            if (group_clears_threshold(group, add(v_star, xi), cfg.tau)) ++successes;
        }
        const double rate =
            static_cast<double>(successes) / static_cast<double>(cfg.trials_per_radius);
        if (rate < cfg.success_rate) return last_good; // first failure ends the search
        last_good = rho;
    }
}

double activation_deviation(const DenseMatrix& delta_w, const DenseVector& k_o,
                            const DenseVector& k_tilde) {
    if (k_o.dim() != k_tilde.dim() || delta_w.cols() != k_o.dim())
        throw ShapeError("activation_deviation: dims differ");
    return matvec(delta_w, subtract(k_tilde, k_o)).norm2();
}

double gradient_conflict(const DenseVector& g1, const DenseVector& g2) {
    return 1.0 - cosine(g1, g2);
}

ConflictDistribution conflict_distribution(const AssociativeMemory& m,
                                           const std::vector<SubjectGroup>& groups) {
    ConflictDistribution out;
    for (const SubjectGroup& group : groups) {
        if (group.facts.size() < 2)
            throw DegenerateInputError("conflict_distribution: group " + group.subject_id +
                                       " has fewer than two facts");
        const DenseVector v_init = forward(m, group.key);
        std::vector<DenseVector> grads;
        grads.reserve(group.facts.size());
        for (const Fact& f : group.facts)
            grads.push_back(value_gradient(f.readout, v_init, f.target_token));
        for (std::size_t a = 0; a < grads.size(); ++a)
            for (std::size_t b = a + 1; b < grads.size(); ++b)
                out.pairs.push_back({group.subject_id, a, b,
                                     gradient_conflict(grads[a], grads[b])});
    }

    if (out.pairs.empty()) throw DegenerateInputError("conflict_distribution: no pairs");
    double sum = 0.0;
    out.min = out.pairs.front().score;
    out.max = out.pairs.front().score;
    for (const auto& p : out.pairs) {
        sum += p.score;
        out.min = std::min(out.min, p.score);
        out.max = std::max(out.max, p.score);
    }
    out.mean = sum / static_cast<double>(out.pairs.size());
    double var = 0.0;
    for (const auto& p : out.pairs) var += (p.score - out.mean) * (p.score - out.mean);
    out.stddev = std::sqrt(var / static_cast<double>(out.pairs.size()));
    return out;
}

SimilarityBlocks key_similarity_blocks(
    const std::vector<std::pair<std::string, std::vector<DenseVector>>>& key_groups) {
    if (key_groups.empty()) throw DegenerateInputError("key_similarity_blocks: no groups");
    for (const auto& [label, keys] : key_groups)
        if (keys.empty())
            throw DegenerateInputError("key_similarity_blocks: empty group " + label);

    SimilarityBlocks out;
    const std::size_t n = key_groups.size();
    out.means = DenseMatrix(n, n);
    for (const auto& [label, keys] : key_groups) out.labels.push_back(label);

    for (std::size_t a = 0; a < n; ++a) {
        const auto& ka = key_groups[a].second;
        for (std::size_t b = a; b < n; ++b) {
            const auto& kb = key_groups[b].second;
            double sum = 0.0;
            std::size_t count = 0;
            if (a == b) {
                if (ka.size() == 1) {
                    sum = 1.0; // singleton diagonal by convention
                    count = 1;
                } else {
                    for (std::size_t i = 0; i < ka.size(); ++i)
                        for (std::size_t j = i + 1; j < ka.size(); ++j) {
                            sum += cosine(ka[i], ka[j]);
                            ++count;
                        }
                }
            } else {
                for (const DenseVector& u : ka)
                    for (const DenseVector& v : kb) {
                        sum += cosine(u, v);
                        ++count;
                    }
            }
            const double mean = sum / static_cast<double>(count);
            out.means(a, b) = mean;
            out.means(b, a) = mean;
        }
    }
    return out;
}

double locality_deviation(const DenseMatrix& delta_w, const DenseVector& k_old) {
    if (delta_w.cols() != k_old.dim()) throw ShapeError("locality_deviation: dims differ");
    return matvec(delta_w, k_old).norm2();
}

AmplificationStats amplification_analysis(const DenseMatrix& c, const DenseMatrix& keys,
                                          const std::vector<DenseVector>& deltas) {
    if (deltas.empty()) throw DegenerateInputError("amplification_analysis: no deltas");
    const std::size_t d = c.rows();
    if (keys.cols() > 0 && keys.rows() != d)
        throw ShapeError("amplification_analysis: keys rows differ from C dim");

    SymEigen eig = sym_eigen(c);
    const double lmin = eig.eigenvalues.front();
    const double lmax = eig.eigenvalues.back();
    if (lmin <= 1e-12 * lmax || lmax <= 0.0)
        throw DefinitenessError("amplification_analysis: C is not positive-definite");

    AmplificationStats out;
    out.lambda_max_c_inv = 1.0 / lmin;
    out.kappa_c = lmax / lmin;

    // Column 0 of the eigenvectors pairs with lambda_min(C), i.e. the top
    // eigendirection of C^{-1}.
    DenseVector minor_axis(d);
    for (std::size_t i = 0; i < d; ++i) minor_axis[i] = eig.eigenvectors(i, 0);

    DenseMatrix stacked(d, deltas.size());
    for (std::size_t j = 0; j < deltas.size(); ++j) {
        const DenseVector& delta = deltas[j];
        if (delta.dim() != d) throw ShapeError("amplification_analysis: delta dim differs");
        if (delta.norm2() == 0.0)
            throw DegenerateInputError("amplification_analysis: zero delta");
        for (std::size_t i = 0; i < d; ++i) stacked(i, j) = delta[i];
        out.delta_proj_norms.push_back(std::abs(dot(delta, minor_axis)));
    }

    SpdSolver c_solver(c);
    DenseMatrix under_cov = smw_apply_columns(c_solver, keys, stacked);
    SpdSolver id_solver(DenseMatrix::identity(d));
    DenseMatrix under_id = smw_apply_columns(id_solver, keys, stacked);

    for (std::size_t j = 0; j < deltas.size(); ++j) {
        double cov_sq = 0.0, id_sq = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            cov_sq += under_cov(i, j) * under_cov(i, j);
            id_sq += under_id(i, j) * under_id(i, j);
        }
        const double dn = deltas[j].norm2();
        out.r_cov.push_back(std::sqrt(cov_sq) / dn);
        out.r_id.push_back(std::sqrt(id_sq) / dn);
        if (out.r_cov.back() > out.r_id.back()) ++out.amplified_count;
    }
    out.median_r_cov = median(out.r_cov);
    out.median_r_id = median(out.r_id);
    return out;
}

} // namespace editlab
