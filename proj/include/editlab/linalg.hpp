#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace editlab {

// Dense row-major matrix of doubles. Plain value type: all heavy kernels
// (factorizations, eigensolves) stay behind the free functions below.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static DenseMatrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }

    DenseMatrix transposed() const;
    double frobenius_norm() const;
    bool all_finite() const;

    bool operator==(const DenseMatrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

class DenseVector {
public:
    DenseVector() = default;
    explicit DenseVector(std::size_t dim) : data_(dim, 0.0) {}
    explicit DenseVector(std::vector<double> data) : data_(std::move(data)) {}
    DenseVector(std::initializer_list<double> values) : data_(values) {}

    static DenseVector unit(std::size_t dim, std::size_t axis);

    std::size_t dim() const { return data_.size(); }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }

    double norm2() const;
    bool all_finite() const;

    bool operator==(const DenseVector& other) const = default;

private:
    std::vector<double> data_;
};

// Full symmetric eigendecomposition. Eigenvalues ascending; eigenvector
// columns orthonormal with the first nonzero component of each made positive
// so repeated runs are comparable entry-for-entry.
struct SymEigen {
    std::vector<double> eigenvalues;
    DenseMatrix eigenvectors; // column i pairs with eigenvalues[i]
};

// --- elementwise / BLAS-1 style helpers -------------------------------------

DenseVector add(const DenseVector& a, const DenseVector& b);
DenseVector subtract(const DenseVector& a, const DenseVector& b);
DenseVector scale(const DenseVector& v, double s);
// a + s*b
DenseVector add_scaled(const DenseVector& a, double s, const DenseVector& b);
double dot(const DenseVector& a, const DenseVector& b);
DenseVector mean_vector(std::span<const DenseVector> vectors);

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix subtract(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix scale(const DenseMatrix& m, double s);

// --- core operations ---------------------------------------------------------

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseVector matvec(const DenseMatrix& a, const DenseVector& x);
// A^T x without materializing the transpose.
DenseVector matvec_transposed(const DenseMatrix& a, const DenseVector& x);
// Rank-structured product x y^T.
DenseMatrix outer(const DenseVector& x, const DenseVector& y);

// Reusable SPD factorization (Cholesky with one step of iterative
// refinement per solve). Symmetrizes as (A+A^T)/2 first and rejects inputs
// whose smallest pivot falls at or below 1e-12 of the largest.
class SpdSolver {
public:
    explicit SpdSolver(const DenseMatrix& a);
    ~SpdSolver();
    SpdSolver(SpdSolver&&) noexcept;
    SpdSolver& operator=(SpdSolver&&) noexcept;
    SpdSolver(const SpdSolver&) = delete;
    SpdSolver& operator=(const SpdSolver&) = delete;

    std::size_t dim() const;
    // Smallest over largest Cholesky pivot; a cheap condition estimate.
    double pivot_ratio() const;
    DenseVector solve(const DenseVector& b) const;
    DenseMatrix solve(const DenseMatrix& b) const; // column-wise multi-RHS

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

DenseVector solve_spd(const DenseMatrix& a, const DenseVector& b);

// (C + K K^T)^{-1} x through the low-rank expansion
//   C^{-1}x - C^{-1}K (I + K^T C^{-1} K)^{-1} K^T C^{-1} x.
// K is d x B with B <= d; B = 0 degenerates to a plain C^{-1} x.
DenseVector smw_apply(const DenseMatrix& c, const DenseMatrix& k, const DenseVector& x);
// Same expansion against an existing factorization of C, one column of X at
// a time. Lets batch callers pay the C factorization once.
DenseMatrix smw_apply_columns(const SpdSolver& c_solver, const DenseMatrix& k, const DenseMatrix& x);

SymEigen sym_eigen(const DenseMatrix& a);

double cosine(const DenseVector& u, const DenseVector& v);

double condition_number_spd(const DenseMatrix& a);

} // namespace editlab
