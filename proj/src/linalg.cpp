#include "editlab/linalg.hpp"

#include "editlab/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace editlab {

namespace {

using EigenRowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EigenMap = Eigen::Map<const EigenRowMajor>;
using EigenVecMap = Eigen::Map<const Eigen::VectorXd>;

EigenMap map_of(const DenseMatrix& m) {
    return EigenMap(m.data().data(), static_cast<Eigen::Index>(m.rows()),
                    static_cast<Eigen::Index>(m.cols()));
}

EigenVecMap map_of(const DenseVector& v) {
    return EigenVecMap(v.data().data(), static_cast<Eigen::Index>(v.dim()));
}

DenseMatrix from_eigen(const Eigen::MatrixXd& m) {
    DenseMatrix out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = m(r, c);
    return out;
}

DenseVector from_eigen(const Eigen::VectorXd& v) {
    DenseVector out(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i)
        out[static_cast<std::size_t>(i)] = v(i);
    return out;
}

void require_square(const DenseMatrix& a, const char* op) {
    if (a.rows() != a.cols()) {
        std::ostringstream msg;
        msg << op << ": matrix must be square, got " << a.rows() << "x" << a.cols();
        throw ShapeError(msg.str());
    }
}

void require_symmetric(const DenseMatrix& a, const char* op, double tol = 1e-10) {
    require_square(a, op);
    double scale = 1.0;
    for (double v : a.data()) scale = std::max(scale, std::abs(v));
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = r + 1; c < a.cols(); ++c)
            if (std::abs(a(r, c) - a(c, r)) > tol * scale) {
                std::ostringstream msg;
                msg << op << ": matrix not symmetric at (" << r << "," << c << "): "
                    << a(r, c) << " vs " << a(c, r);
                throw ShapeError(msg.str());
            }
}

} // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
        throw ShapeError("DenseMatrix: data length does not match rows*cols");
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

DenseMatrix DenseMatrix::transposed() const {
    DenseMatrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c)
            t(c, r) = (*this)(r, c);
    return t;
}

double DenseMatrix::frobenius_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
}

bool DenseMatrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

DenseVector DenseVector::unit(std::size_t dim, std::size_t axis) {
    DenseVector v(dim);
    v[axis] = 1.0;
    return v;
}

double DenseVector::norm2() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
}

bool DenseVector::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

DenseVector add(const DenseVector& a, const DenseVector& b) {
    if (a.dim() != b.dim()) throw ShapeError("add: vector dims differ");
    DenseVector out(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] + b[i];
    return out;
}

DenseVector subtract(const DenseVector& a, const DenseVector& b) {
    if (a.dim() != b.dim()) throw ShapeError("subtract: vector dims differ");
    DenseVector out(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] - b[i];
    return out;
}

DenseVector scale(const DenseVector& v, double s) {
    DenseVector out(v.dim());
    for (std::size_t i = 0; i < v.dim(); ++i) out[i] = v[i] * s;
    return out;
}

DenseVector add_scaled(const DenseVector& a, double s, const DenseVector& b) {
    if (a.dim() != b.dim()) throw ShapeError("add_scaled: vector dims differ");
    DenseVector out(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] + s * b[i];
    return out;
}

double dot(const DenseVector& a, const DenseVector& b) {
    if (a.dim() != b.dim()) throw ShapeError("dot: vector dims differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) s += a[i] * b[i];
    return s;
}

DenseVector mean_vector(std::span<const DenseVector> vectors) {
    if (vectors.empty()) throw DegenerateInputError("mean_vector: empty list");
    DenseVector acc(vectors.front().dim());
    for (const DenseVector& v : vectors) {
        if (v.dim() != acc.dim()) throw ShapeError("mean_vector: mixed dims");
        for (std::size_t i = 0; i < acc.dim(); ++i) acc[i] += v[i];
    }
    return scale(acc, 1.0 / static_cast<double>(vectors.size()));
}

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("add: matrix dims differ");
    DenseMatrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.data().size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
    return out;
}

DenseMatrix subtract(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError("subtract: matrix dims differ");
    DenseMatrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.data().size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
    return out;
}

DenseMatrix scale(const DenseMatrix& m, double s) {
    DenseMatrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.data().size(); ++i) out.data()[i] = m.data()[i] * s;
    return out;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows()) {
        std::ostringstream msg;
        msg << "matmul: inner dims differ, " << a.rows() << "x" << a.cols() << " * " << b.rows()
            << "x" << b.cols();
        throw ShapeError(msg.str());
    }
    DenseMatrix out(a.rows(), b.cols());
    Eigen::Map<EigenRowMajor>(out.data().data(), static_cast<Eigen::Index>(out.rows()),
                              static_cast<Eigen::Index>(out.cols())) = map_of(a) * map_of(b);
    return out;
}

DenseVector matvec(const DenseMatrix& a, const DenseVector& x) {
    if (a.cols() != x.dim()) throw ShapeError("matvec: dims differ");
    DenseVector out(a.rows());
    Eigen::Map<Eigen::VectorXd>(out.data().data(), static_cast<Eigen::Index>(out.dim())) =
        map_of(a) * map_of(x);
    return out;
}

DenseVector matvec_transposed(const DenseMatrix& a, const DenseVector& x) {
    if (a.rows() != x.dim()) throw ShapeError("matvec_transposed: dims differ");
    DenseVector out(a.cols());
    Eigen::Map<Eigen::VectorXd>(out.data().data(), static_cast<Eigen::Index>(out.dim())) =
        map_of(a).transpose() * map_of(x);
    return out;
}

DenseMatrix outer(const DenseVector& x, const DenseVector& y) {
    DenseMatrix out(x.dim(), y.dim());
    for (std::size_t r = 0; r < x.dim(); ++r)
        for (std::size_t c = 0; c < y.dim(); ++c)
            out(r, c) = x[r] * y[c];
    return out;
}

// --- SPD solver ---------------------------------------------------------------

struct SpdSolver::Impl {
    Eigen::MatrixXd symmetrized;
    Eigen::LLT<Eigen::MatrixXd> llt;
    double pivot_ratio = 0.0;
};

SpdSolver::SpdSolver(const DenseMatrix& a) : impl_(std::make_unique<Impl>()) {
    require_symmetric(a, "solve_spd");
    if (!a.all_finite()) throw ShapeError("solve_spd: matrix has non-finite entries");

    const auto n = static_cast<Eigen::Index>(a.rows());
    Eigen::MatrixXd sym = map_of(a);
    sym = 0.5 * (sym + sym.transpose().eval());
    impl_->symmetrized = sym;
    impl_->llt.compute(sym);

    // Pivot ratio test stands in for the eigenvalue ratio: rejects indefinite
    // matrices (LLT breakdown) and effectively singular ones.
    bool ok = impl_->llt.info() == Eigen::Success;
    if (ok) {
        const auto& l = impl_->llt.matrixLLT();
        double dmax = 0.0, dmin = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < n; ++i) {
            const double piv = l(i, i) * l(i, i);
            dmax = std::max(dmax, piv);
            dmin = std::min(dmin, piv);
        }
        impl_->pivot_ratio = dmax > 0.0 ? dmin / dmax : 0.0;
        ok = dmin > 1e-12 * dmax;
    }
    if (!ok) throw DefinitenessError("solve_spd: matrix is not positive-definite");
}

SpdSolver::~SpdSolver() = default;
SpdSolver::SpdSolver(SpdSolver&&) noexcept = default;
SpdSolver& SpdSolver::operator=(SpdSolver&&) noexcept = default;

std::size_t SpdSolver::dim() const {
    return static_cast<std::size_t>(impl_->symmetrized.rows());
}

double SpdSolver::pivot_ratio() const { return impl_->pivot_ratio; }

DenseVector SpdSolver::solve(const DenseVector& b) const {
    if (b.dim() != dim()) throw ShapeError("solve_spd: rhs dim differs from matrix dim");
    Eigen::VectorXd rhs = map_of(b);
    Eigen::VectorXd x = impl_->llt.solve(rhs);
    // One refinement step keeps the residual near machine precision even at
    // condition numbers around 1e8.
    Eigen::VectorXd r = rhs - impl_->symmetrized * x;
    x += impl_->llt.solve(r);
    return from_eigen(x);
}

DenseMatrix SpdSolver::solve(const DenseMatrix& b) const {
    if (b.rows() != dim()) throw ShapeError("solve_spd: rhs rows differ from matrix dim");
    Eigen::MatrixXd rhs = map_of(b);
    Eigen::MatrixXd x = impl_->llt.solve(rhs);
    Eigen::MatrixXd r = rhs - impl_->symmetrized * x;
    x += impl_->llt.solve(r);
    return from_eigen(Eigen::MatrixXd(x));
}

DenseVector solve_spd(const DenseMatrix& a, const DenseVector& b) {
    return SpdSolver(a).solve(b);
}

DenseVector smw_apply(const DenseMatrix& c, const DenseMatrix& k, const DenseVector& x) {
    SpdSolver solver(c);
    DenseMatrix xs(x.dim(), 1);
    for (std::size_t i = 0; i < x.dim(); ++i) xs(i, 0) = x[i];
    DenseMatrix out = smw_apply_columns(solver, k, xs);
    DenseVector v(x.dim());
    for (std::size_t i = 0; i < x.dim(); ++i) v[i] = out(i, 0);
    return v;
}

DenseMatrix smw_apply_columns(const SpdSolver& c_solver, const DenseMatrix& k,
                              const DenseMatrix& x) {
    const std::size_t d = c_solver.dim();
    if (x.rows() != d) throw ShapeError("smw_apply: x dim differs from C dim");
    if (k.cols() > 0 && k.rows() != d) throw ShapeError("smw_apply: K rows differ from C dim");
    if (k.cols() > d) throw ShapeError("smw_apply: K has more columns than rows");

    DenseMatrix cinv_x = c_solver.solve(x);
    if (k.cols() == 0) return cinv_x;

    DenseMatrix cinv_k = c_solver.solve(k);
    // Capacitance S = I_B + K^T C^{-1} K, small B x B system. Symmetric in
    // exact arithmetic; solver rounding can leave a skew part, so fold it.
    DenseMatrix s = matmul(k.transposed(), cinv_k);
    for (std::size_t r = 0; r < s.rows(); ++r) {
        s(r, r) += 1.0;
        for (std::size_t c2 = r + 1; c2 < s.cols(); ++c2) {
            const double avg = 0.5 * (s(r, c2) + s(c2, r));
            s(r, c2) = avg;
            s(c2, r) = avg;
        }
    }
    SpdSolver s_solver(s);

    DenseMatrix kt_cinv_x = matmul(k.transposed(), cinv_x);
    DenseMatrix correction = matmul(cinv_k, s_solver.solve(kt_cinv_x));
    return subtract(cinv_x, correction);
}

SymEigen sym_eigen(const DenseMatrix& a) {
    require_symmetric(a, "sym_eigen");
    if (!a.all_finite()) throw ShapeError("sym_eigen: matrix has non-finite entries");

    Eigen::MatrixXd sym = map_of(a);
    sym = 0.5 * (sym + sym.transpose().eval());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw Error("sym_eigen: eigensolver failed to converge");

    SymEigen out;
    const auto n = sym.rows();
    out.eigenvalues.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) out.eigenvalues[static_cast<std::size_t>(i)] = es.eigenvalues()(i);

    Eigen::MatrixXd q = es.eigenvectors();
    for (Eigen::Index c = 0; c < n; ++c) {
        const double colmax = q.col(c).cwiseAbs().maxCoeff();
        for (Eigen::Index r = 0; r < n; ++r) {
            if (std::abs(q(r, c)) > 1e-12 * colmax) {
                if (q(r, c) < 0.0) q.col(c) = -q.col(c);
                break;
            }
        }
    }
    out.eigenvectors = from_eigen(q);
    return out;
}

double cosine(const DenseVector& u, const DenseVector& v) {
    const double nu = u.norm2();
    const double nv = v.norm2();
    if (nu == 0.0 || nv == 0.0) throw DegenerateInputError("cosine: zero vector");
    const double c = dot(u, v) / (nu * nv);
    return std::clamp(c, -1.0, 1.0);
}

double condition_number_spd(const DenseMatrix& a) {
    SymEigen eig = sym_eigen(a);
    const double lmin = eig.eigenvalues.front();
    const double lmax = eig.eigenvalues.back();
    if (lmin <= 1e-12 * lmax || lmax <= 0.0)
        throw DefinitenessError("condition_number_spd: matrix is not positive-definite");
    return lmax / lmin;
}

} // namespace editlab
