#include "editlab/linalg.hpp"

#include "editlab/errors.hpp"
#include "editlab/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace editlab;

namespace {

DenseMatrix random_spd(Rng& rng, std::size_t d, double condition) {
    // Random orthogonal basis via Gram-Schmidt on gaussian columns, spectrum
    // log-spaced between 1 and 1/condition.
    std::vector<DenseVector> basis;
    for (std::size_t i = 0; i < d; ++i) {
        DenseVector v(d);
        for (std::size_t j = 0; j < d; ++j) v[j] = rng.gaussian();
        for (int pass = 0; pass < 2; ++pass)
            for (const DenseVector& prev : basis)
                v = add_scaled(v, -dot(v, prev), prev);
        const double n = v.norm2();
        for (std::size_t j = 0; j < d; ++j) v[j] /= n;
        basis.push_back(std::move(v));
    }
    DenseMatrix c(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        const double t = d == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(d - 1);
        const double lambda = std::pow(condition, -t);
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t cc = 0; cc < d; ++cc)
                c(r, cc) += lambda * basis[i][r] * basis[i][cc];
    }
    return c;
}

DenseMatrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
    DenseMatrix m(rows, cols);
    for (double& v : m.data()) v = rng.gaussian();
    return m;
}

DenseVector random_vector(Rng& rng, std::size_t d) {
    DenseVector v(d);
    for (std::size_t i = 0; i < d; ++i) v[i] = rng.gaussian();
    return v;
}

} // namespace

TEST_CASE("matmul basics") {
    DenseMatrix a(2, 2, {1, 2, 3, 4});

    SUBCASE("identity times a") {
        DenseMatrix out = matmul(DenseMatrix::identity(2), a);
        CHECK(out == a);
    }
    SUBCASE("hand multiplied column") {
        DenseMatrix b(2, 1, {1, 1});
        DenseMatrix out = matmul(a, b);
        CHECK(out(0, 0) == doctest::Approx(3.0));
        CHECK(out(1, 0) == doctest::Approx(7.0));
    }
    SUBCASE("shape mismatch rejected") {
        DenseMatrix b(3, 2);
        CHECK_THROWS_AS(matmul(a, b), ShapeError);
    }
}

TEST_CASE("solve_spd basics") {
    SUBCASE("diagonal solve") {
        DenseMatrix a(2, 2, {2, 0, 0, 1});
        DenseVector x = solve_spd(a, DenseVector({2, 3}));
        CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(x[1] == doctest::Approx(3.0).epsilon(1e-12));
    }
    SUBCASE("identity solve returns rhs") {
        DenseVector b({0.5, -1.25, 3.0});
        DenseVector x = solve_spd(DenseMatrix::identity(3), b);
        for (std::size_t i = 0; i < 3; ++i) CHECK(x[i] == doctest::Approx(b[i]));
    }
    SUBCASE("indefinite input rejected") {
        DenseMatrix a(2, 2, {1, 2, 2, 1}); // eigenvalues 3 and -1
        CHECK_THROWS_AS(solve_spd(a, DenseVector({1, 1})), DefinitenessError);
    }
    SUBCASE("non-symmetric input rejected") {
        DenseMatrix a(2, 2, {1, 5, 0, 1});
        CHECK_THROWS_AS(solve_spd(a, DenseVector({1, 1})), ShapeError);
    }
    SUBCASE("residual stays small at high condition numbers") {
        Rng rng(77);
        for (double cond : {1e2, 1e6, 1e8}) {
            DenseMatrix a = random_spd(rng, 64, cond);
            DenseVector b = random_vector(rng, 64);
            DenseVector x = solve_spd(a, b);
            DenseVector residual = subtract(matvec(a, x), b);
            CHECK(residual.norm2() <= 1e-8 * b.norm2());
        }
    }
}

TEST_CASE("smw_apply closed forms") {
    DenseMatrix eye = DenseMatrix::identity(2);
    DenseMatrix k(2, 1, {1, 0});

    SUBCASE("rank-one update on the aligned axis") {
        DenseVector out = smw_apply(eye, k, DenseVector({1, 0}));
        CHECK(out[0] == doctest::Approx(0.5).epsilon(1e-14));
        CHECK(out[1] == doctest::Approx(0.0));
    }
    SUBCASE("orthogonal component untouched") {
        DenseVector out = smw_apply(eye, k, DenseVector({0, 1}));
        CHECK(out[0] == doctest::Approx(0.0));
        CHECK(out[1] == doctest::Approx(1.0));
    }
    SUBCASE("empty K degenerates to a plain solve") {
        DenseMatrix c(2, 2, {2, 0, 0, 4});
        DenseMatrix empty(2, 0);
        DenseVector out = smw_apply(c, empty, DenseVector({2, 4}));
        CHECK(out[0] == doctest::Approx(1.0));
        CHECK(out[1] == doctest::Approx(1.0));
    }
}

TEST_CASE("smw matches the direct solve on random instances") {
    // Relative to the solution norm: at condition 1e6 the solution runs
    // ~kappa times larger than x, so that is the meaningful scale.
    Rng rng(123);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t d = 16 + rng.uniform_index(113); // up to 128
        const std::size_t b = 1 + rng.uniform_index(8);
        DenseMatrix c = random_spd(rng, d, 1e6);
        DenseMatrix k = random_matrix(rng, d, b);
        DenseVector x = random_vector(rng, d);

        DenseVector via_smw = smw_apply(c, k, x);

        DenseMatrix a = add(c, matmul(k, k.transposed()));
        DenseVector direct = solve_spd(a, x);

        CHECK(subtract(via_smw, direct).norm2() <= 1e-6 * direct.norm2());
    }
}

TEST_CASE("identity-plus-gram inverse never amplifies") {
    Rng rng(321);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t d = 8 + rng.uniform_index(25);
        const std::size_t b = 1 + rng.uniform_index(8);
        DenseMatrix k = random_matrix(rng, d, b);
        DenseVector x = random_vector(rng, d);
        DenseVector out = smw_apply(DenseMatrix::identity(d), k, x);
        CHECK(out.norm2() <= x.norm2() * (1.0 + 1e-12));
    }
}

TEST_CASE("sym_eigen basics") {
    SUBCASE("diagonal case, ascending order") {
        DenseMatrix a(2, 2, {3, 0, 0, 1});
        SymEigen eig = sym_eigen(a);
        CHECK(eig.eigenvalues[0] == doctest::Approx(1.0));
        CHECK(eig.eigenvalues[1] == doctest::Approx(3.0));
        // permuted identity with the sign convention applied
        CHECK(std::abs(eig.eigenvectors(1, 0)) == doctest::Approx(1.0));
        CHECK(std::abs(eig.eigenvectors(0, 1)) == doctest::Approx(1.0));
    }
    SUBCASE("identity spectrum") {
        SymEigen eig = sym_eigen(DenseMatrix::identity(5));
        for (double v : eig.eigenvalues) CHECK(v == doctest::Approx(1.0));
    }
    SUBCASE("non-symmetric rejected") {
        DenseMatrix a(2, 2, {1, 2, 0, 1});
        CHECK_THROWS_AS(sym_eigen(a), ShapeError);
    }
    SUBCASE("sign convention: first nonzero component positive") {
        Rng rng(5);
        DenseMatrix a = random_spd(rng, 8, 100.0);
        SymEigen eig = sym_eigen(a);
        for (std::size_t c = 0; c < 8; ++c) {
            for (std::size_t r = 0; r < 8; ++r) {
                if (std::abs(eig.eigenvectors(r, c)) > 1e-9) {
                    CHECK(eig.eigenvectors(r, c) > 0.0);
                    break;
                }
            }
        }
    }
}

TEST_CASE("sym_eigen reconstruction and orthonormality on random matrices") {
    Rng rng(99);
    for (std::size_t d : {4u, 32u, 128u, 256u}) {
        DenseMatrix a(d, d);
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = r; c < d; ++c) {
                const double v = rng.gaussian();
                a(r, c) = v;
                a(c, r) = v;
            }
        SymEigen eig = sym_eigen(a);

        // ascending eigenvalues
        for (std::size_t i = 1; i < d; ++i) CHECK(eig.eigenvalues[i] >= eig.eigenvalues[i - 1]);

        // Q^T Q deviates from identity by <= 1e-8 per entry
        DenseMatrix qtq = matmul(eig.eigenvectors.transposed(), eig.eigenvectors);
        double max_dev = 0.0;
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = 0; c < d; ++c)
                max_dev = std::max(max_dev, std::abs(qtq(r, c) - (r == c ? 1.0 : 0.0)));
        CHECK(max_dev <= 1e-8);

        // reconstruction within 1e-8 relative Frobenius
        DenseMatrix lambda(d, d);
        for (std::size_t i = 0; i < d; ++i) lambda(i, i) = eig.eigenvalues[i];
        DenseMatrix rebuilt =
            matmul(matmul(eig.eigenvectors, lambda), eig.eigenvectors.transposed());
        CHECK(subtract(rebuilt, a).frobenius_norm() <= 1e-8 * a.frobenius_norm());
    }
}

TEST_CASE("sym_eigen recovers a prescribed tiny spectrum") {
    // Q diag(1e-4, 1) Q^T for a rotation Q
    const double theta = 0.7;
    DenseMatrix q(2, 2, {std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta)});
    DenseMatrix lambda(2, 2, {1e-4, 0, 0, 1});
    DenseMatrix a = matmul(matmul(q, lambda), q.transposed());
    SymEigen eig = sym_eigen(a);
    CHECK(eig.eigenvalues[0] == doctest::Approx(1e-4).epsilon(1e-8));
    CHECK(eig.eigenvalues[1] == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("cosine") {
    SUBCASE("orthogonal") {
        CHECK(cosine(DenseVector({1, 0}), DenseVector({0, 1})) == doctest::Approx(0.0));
    }
    SUBCASE("parallel, scale invariant") {
        CHECK(cosine(DenseVector({2, 0}), DenseVector({5, 0})) == doctest::Approx(1.0));
    }
    SUBCASE("45 degrees") {
        CHECK(std::abs(cosine(DenseVector({1, 1}), DenseVector({1, 0})) - 1.0 / std::sqrt(2.0)) <=
              1e-9);
    }
    SUBCASE("zero vector rejected") {
        CHECK_THROWS_AS(cosine(DenseVector({0, 0}), DenseVector({1, 0})), DegenerateInputError);
    }
    SUBCASE("invariant under positive scaling") {
        Rng rng(17);
        for (int trial = 0; trial < 50; ++trial) {
            DenseVector u = random_vector(rng, 6);
            DenseVector v = random_vector(rng, 6);
            const double s = std::exp(3.0 * rng.gaussian());
            CHECK(std::abs(cosine(scale(u, s), v) - cosine(u, v)) <= 1e-12);
            CHECK(std::abs(cosine(u, scale(v, s)) - cosine(u, v)) <= 1e-12);
        }
    }
}

TEST_CASE("condition_number_spd") {
    SUBCASE("identity") { CHECK(condition_number_spd(DenseMatrix::identity(4)) == doctest::Approx(1.0)); }
    SUBCASE("prescribed diagonal ratio") {
        DenseMatrix a(2, 2, {1, 0, 0, 1e-4});
        CHECK(condition_number_spd(a) == doctest::Approx(1e4).epsilon(1e-10));
    }
    SUBCASE("indefinite rejected") {
        DenseMatrix a(2, 2, {1, 2, 2, 1});
        CHECK_THROWS_AS(condition_number_spd(a), DefinitenessError);
    }
}

TEST_CASE("mean_vector symmetry") {
    DenseVector g({1.5, -2.0, 0.25});
    std::vector<DenseVector> pair{g, scale(g, -1.0)};
    DenseVector m = mean_vector(pair);
    for (std::size_t i = 0; i < 3; ++i) CHECK(m[i] == 0.0);
    CHECK_THROWS_AS(mean_vector(std::span<const DenseVector>{}), DegenerateInputError);
}
