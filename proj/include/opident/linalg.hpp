#pragma once

// Dense matrix types with enforced structure (real symmetric, zero-diagonal
// symmetric, Hermitian, unitary) and the few matrix functions the identification
// algorithms need: Hermitian eigendecomposition with a reproducible gauge,
// exponentials of Hermitian generators and the principal unitary logarithm.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "opident/errors.hpp"
#include "opident/tolerances.hpp"

namespace opident {

using Complex = std::complex<double>;
using Index = Eigen::Index;
using ComplexMatrix = Eigen::MatrixXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

inline constexpr Complex kI{0.0, 1.0};

namespace detail {

inline void require_square(Index rows, Index cols, const char* what)
{
    if (rows != cols) {
        throw DimensionError(std::string(what) + ": matrix is not square (" + std::to_string(rows)
                             + "x" + std::to_string(cols) + ")");
    }
}

inline void require_same_dim(Index a, Index b, const char* what)
{
    if (a != b) {
        throw DimensionError(std::string(what) + ": dimension mismatch (" + std::to_string(a)
                             + " vs " + std::to_string(b) + ")");
    }
}

inline bool all_finite(const auto& m) { return m.allFinite(); }

inline std::string sci(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

} // namespace detail

/// Real symmetric matrix; symmetry is exact (bitwise) and checked on construction.
class RealSymmetric
{
public:
    RealSymmetric() = default;

    explicit RealSymmetric(RealMatrix entries) : m_(std::move(entries))
    {
        detail::require_square(m_.rows(), m_.cols(), "RealSymmetric");
        for (Index i = 0; i < m_.rows(); ++i)
            for (Index j = i + 1; j < m_.cols(); ++j)
                if (m_(i, j) != m_(j, i))
                    throw StructureError("RealSymmetric: entries (" + std::to_string(i) + ","
                                         + std::to_string(j) + ") and transpose differ");
    }

    static RealSymmetric zero(Index n) { return RealSymmetric(RealMatrix::Zero(n, n)); }

    /// (A + A^T) / 2, exactly symmetric.
    static RealSymmetric symmetrized(const RealMatrix& a)
    {
        detail::require_square(a.rows(), a.cols(), "RealSymmetric::symmetrized");
        RealMatrix s = a;
        for (Index i = 0; i < a.rows(); ++i)
            for (Index j = i + 1; j < a.cols(); ++j)
                s(i, j) = s(j, i) = 0.5 * (a(i, j) + a(j, i));
        return RealSymmetric(std::move(s));
    }

    Index dim() const { return m_.rows(); }
    const RealMatrix& matrix() const { return m_; }
    ComplexMatrix to_complex() const { return m_.cast<Complex>(); }
    double operator()(Index i, Index j) const { return m_(i, j); }

    friend RealSymmetric operator+(const RealSymmetric& a, const RealSymmetric& b)
    {
        detail::require_same_dim(a.dim(), b.dim(), "RealSymmetric +");
        return RealSymmetric(a.m_ + b.m_);
    }
    friend RealSymmetric operator-(const RealSymmetric& a, const RealSymmetric& b)
    {
        detail::require_same_dim(a.dim(), b.dim(), "RealSymmetric -");
        return RealSymmetric(a.m_ - b.m_);
    }
    friend RealSymmetric operator*(double c, const RealSymmetric& a) { return RealSymmetric(c * a.m_); }

private:
    RealMatrix m_;
};

/// Real symmetric matrix with an identically zero diagonal (dipole operators).
class RealSymmetricZeroDiag
{
public:
    RealSymmetricZeroDiag() = default;

    explicit RealSymmetricZeroDiag(RealMatrix entries) : s_(std::move(entries))
    {
        for (Index i = 0; i < s_.dim(); ++i)
            if (s_(i, i) != 0.0)
                throw StructureError("RealSymmetricZeroDiag: nonzero diagonal entry at "
                                     + std::to_string(i));
    }

    static RealSymmetricZeroDiag zero(Index n) { return RealSymmetricZeroDiag(RealMatrix::Zero(n, n)); }

    /// (A + A^T) / 2 with the diagonal cleared.
    static RealSymmetricZeroDiag symmetrized(const RealMatrix& a)
    {
        RealMatrix s = RealSymmetric::symmetrized(a).matrix();
        s.diagonal().setZero();
        return RealSymmetricZeroDiag(std::move(s));
    }

    Index dim() const { return s_.dim(); }
    const RealMatrix& matrix() const { return s_.matrix(); }
    ComplexMatrix to_complex() const { return s_.to_complex(); }
    double operator()(Index i, Index j) const { return s_(i, j); }
    const RealSymmetric& as_symmetric() const { return s_; }

    friend RealSymmetricZeroDiag operator+(const RealSymmetricZeroDiag& a, const RealSymmetricZeroDiag& b)
    {
        detail::require_same_dim(a.dim(), b.dim(), "RealSymmetricZeroDiag +");
        return RealSymmetricZeroDiag(a.matrix() + b.matrix());
    }
    friend RealSymmetricZeroDiag operator-(const RealSymmetricZeroDiag& a, const RealSymmetricZeroDiag& b)
    {
        detail::require_same_dim(a.dim(), b.dim(), "RealSymmetricZeroDiag -");
        return RealSymmetricZeroDiag(a.matrix() - b.matrix());
    }
    friend RealSymmetricZeroDiag operator*(double c, const RealSymmetricZeroDiag& a)
    {
        return RealSymmetricZeroDiag(c * a.matrix());
    }

private:
    RealSymmetric s_;
};

/// Complex Hermitian matrix, checked to tolerance on construction.
class HermitianMatrix
{
public:
    HermitianMatrix() = default;

    explicit HermitianMatrix(ComplexMatrix entries, double tol = kDefaultTolerances.hermiticity)
        : m_(std::move(entries))
    {
        detail::require_square(m_.rows(), m_.cols(), "HermitianMatrix");
        if (!detail::all_finite(m_)) throw ComputationError("HermitianMatrix: non-finite entries");
        for (Index i = 0; i < m_.rows(); ++i) {
            if (std::abs(m_(i, i).imag()) > tol)
                throw StructureError("HermitianMatrix: diagonal entry " + std::to_string(i)
                                     + " has imaginary part");
            for (Index j = i + 1; j < m_.cols(); ++j)
                if (std::abs(m_(i, j) - std::conj(m_(j, i))) > tol)
                    throw StructureError("HermitianMatrix: entries (" + std::to_string(i) + ","
                                         + std::to_string(j) + ") are not conjugate");
        }
    }

    /// (A + A*) / 2 with a real diagonal.
    static HermitianMatrix hermitized(const ComplexMatrix& a)
    {
        detail::require_square(a.rows(), a.cols(), "HermitianMatrix::hermitized");
        ComplexMatrix h = 0.5 * (a + a.adjoint());
        for (Index i = 0; i < h.rows(); ++i) h(i, i) = h(i, i).real();
        return HermitianMatrix(std::move(h));
    }

    static HermitianMatrix from_real(const RealSymmetric& s) { return HermitianMatrix(s.to_complex()); }

    Index dim() const { return m_.rows(); }
    const ComplexMatrix& matrix() const { return m_; }
    Complex operator()(Index i, Index j) const { return m_(i, j); }

private:
    ComplexMatrix m_;
};

inline double unitarity_defect(const ComplexMatrix& u)
{
    return (u.adjoint() * u - ComplexMatrix::Identity(u.rows(), u.cols())).norm();
}

/// Complex unitary matrix; ||U*U - Id||_F is checked on construction.
class UnitaryMatrix
{
public:
    UnitaryMatrix() = default;

    explicit UnitaryMatrix(ComplexMatrix entries, double tol = kDefaultTolerances.unitarity)
        : m_(std::move(entries))
    {
        detail::require_square(m_.rows(), m_.cols(), "UnitaryMatrix");
        if (!detail::all_finite(m_)) throw ComputationError("UnitaryMatrix: non-finite entries");
        const double defect = unitarity_defect(m_);
        if (!(defect <= tol))
            throw StructureError("UnitaryMatrix: unitarity defect " + detail::sci(defect)
                                 + " exceeds tolerance");
    }

    static UnitaryMatrix identity(Index n) { return UnitaryMatrix(ComplexMatrix::Identity(n, n)); }

    Index dim() const { return m_.rows(); }
    const ComplexMatrix& matrix() const { return m_; }
    ComplexMatrix adjoint() const { return m_.adjoint(); }
    Complex operator()(Index i, Index j) const { return m_(i, j); }

private:
    ComplexMatrix m_;
};

/// tr(A* B).
inline Complex frobenius_inner(const ComplexMatrix& a, const ComplexMatrix& b)
{
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionError("frobenius_inner: dimension mismatch");
    return (a.adjoint() * b).trace();
}

inline double frobenius_norm(const ComplexMatrix& a) { return std::sqrt(frobenius_inner(a, a).real()); }

// ---------------------------------------------------------------------------
// Eigendecomposition with a reproducible gauge.

template <typename Scalar>
struct EigenPairs
{
    RealVector values;                                               // ascending
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> vectors;   // columns
};

namespace detail {

// Index of the first entry whose modulus is (to rounding) maximal.
template <typename Derived>
Index pivot_index(const Eigen::MatrixBase<Derived>& column)
{
    const double largest = column.cwiseAbs().maxCoeff();
    for (Index k = 0; k < column.size(); ++k)
        if (std::abs(column(k)) >= largest * (1.0 - 1e-12)) return k;
    return 0;
}

// Scale each column so its pivot entry is real positive, then order tied
// eigenvalues by pivot index.
template <typename Scalar>
EigenPairs<Scalar> normalize_eigenpairs(RealVector values,
                                        Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> vectors,
                                        double tie_tol)
{
    const Index n = values.size();
    std::vector<Index> pivot(static_cast<std::size_t>(n));
    for (Index c = 0; c < n; ++c) {
        const Index p = pivot_index(vectors.col(c));
        pivot[static_cast<std::size_t>(c)] = p;
        const Scalar entry = vectors(p, c);
        if constexpr (std::is_same_v<Scalar, double>) {
            if (entry < 0) vectors.col(c) *= -1.0;
        } else {
            vectors.col(c) *= std::conj(entry) / std::abs(entry);
            vectors(p, c) = std::abs(vectors(p, c));
        }
    }

    const double scale = n > 0 ? std::max(1.0, values.cwiseAbs().maxCoeff()) : 1.0;
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index k = 0; k < n; ++k) order[static_cast<std::size_t>(k)] = k;
    Index start = 0;
    while (start < n) {
        Index stop = start + 1;
        while (stop < n && values(stop) - values(stop - 1) <= tie_tol * scale) ++stop;
        std::stable_sort(order.begin() + start, order.begin() + stop, [&](Index a, Index b) {
            return pivot[static_cast<std::size_t>(a)] < pivot[static_cast<std::size_t>(b)];
        });
        start = stop;
    }

    EigenPairs<Scalar> out;
    out.values.resize(n);
    out.vectors.resize(vectors.rows(), n);
    for (Index k = 0; k < n; ++k) {
        out.values(k) = values(order[static_cast<std::size_t>(k)]);
        out.vectors.col(k) = vectors.col(order[static_cast<std::size_t>(k)]);
    }
    return out;
}

} // namespace detail

struct HermitianEig
{
    RealVector values; // ascending
    UnitaryMatrix vectors;
};

/// H = Q diag(w) Q* with ascending w; each column of Q has its largest-modulus
/// entry real positive.
inline HermitianEig hermitian_eig(const HermitianMatrix& h, const Tolerances& tol = kDefaultTolerances)
{
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(h.matrix());
    if (solver.info() != Eigen::Success) throw ComputationError("hermitian_eig: eigensolver failed");
    auto pairs = detail::normalize_eigenpairs<Complex>(solver.eigenvalues(), solver.eigenvectors(), tol.eig_tie);
    return {std::move(pairs.values), UnitaryMatrix(std::move(pairs.vectors), tol.unitarity)};
}

/// Real-orthogonal variant for real symmetric input: S = Q diag(w) Q^T.
inline EigenPairs<double> symmetric_eig(const RealSymmetric& s, const Tolerances& tol = kDefaultTolerances)
{
    Eigen::SelfAdjointEigenSolver<RealMatrix> solver(s.matrix());
    if (solver.info() != Eigen::Success) throw ComputationError("symmetric_eig: eigensolver failed");
    return detail::normalize_eigenpairs<double>(solver.eigenvalues(), solver.eigenvectors(), tol.eig_tie);
}

/// exp(-i t S) for Hermitian S.
inline UnitaryMatrix exp_minus_i(const HermitianMatrix& s, double t = 1.0)
{
    const auto eig = hermitian_eig(s);
    const ComplexMatrix& q = eig.vectors.matrix();
    Eigen::VectorXcd phases(eig.values.size());
    for (Index k = 0; k < phases.size(); ++k) phases(k) = std::exp(-kI * t * eig.values(k));
    return UnitaryMatrix(q * phases.asDiagonal() * q.adjoint());
}

/// Principal logarithm in the form exp(-iS) = W. Eigenphases of W are taken in
/// (-pi, pi]; a phase within tol.branch_cut of the cut raises BranchAmbiguityError.
inline HermitianMatrix unitary_log_principal(const UnitaryMatrix& w, const Tolerances& tol = kDefaultTolerances)
{
    // W is normal, so its complex Schur form is diagonal up to rounding.
    Eigen::ComplexSchur<ComplexMatrix> schur(w.matrix(), true);
    if (schur.info() != Eigen::Success) throw ComputationError("unitary_log_principal: Schur failed");
    const ComplexMatrix& t = schur.matrixT();
    const ComplexMatrix& z = schur.matrixU();
    RealVector s(t.rows());
    for (Index k = 0; k < t.rows(); ++k) {
        const double phase = std::arg(t(k, k));
        if (std::numbers::pi - std::abs(phase) < tol.branch_cut)
            throw BranchAmbiguityError("unitary_log_principal: eigenphase on the branch cut");
        s(k) = -phase;
    }
    return HermitianMatrix::hermitized(z * s.cast<Complex>().asDiagonal() * z.adjoint());
}

} // namespace opident
