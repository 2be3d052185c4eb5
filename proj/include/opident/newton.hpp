#pragma once

// Newton iteration for phi(H0, mu) = U_target on the Crank-Nicolson map.
//
// Each step solves the real N^2 x N^2 system
//
//   dt sum_n U_{n+1/2}^* (dH0 + eps_n dmu) U_{n+1/2} = S^k
//
// for symmetric dH0 and zero-diagonal symmetric dmu, where S^k is a Hermitian
// surrogate of i((U_N^k)^* U_target - Id): either the principal logarithm
// (exp(-i S) = W) or the skew part i(W - W^*)/2 of W = (U_N^k)^* U_target.
//
// Unknown packing: upper triangle of dH0 including the diagonal, then strict
// upper triangle of dmu, both row-major. Equation packing: Re S_ij, Im S_ij for
// i < j row-major, then S_ii.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/LU>
#include <Eigen/QR>

#include "opident/linalg.hpp"
#include "opident/propagator.hpp"

namespace opident {

struct OperatorPair
{
    RealSymmetric h0;
    RealSymmetricZeroDiag mu;

    Index dim() const { return h0.dim(); }
};

// ---------------------------------------------------------------------------
// Packing.

inline Index packed_size(Index n) { return n * n; }

inline RealVector pack_unknowns(const RealSymmetric& dh0, const RealSymmetricZeroDiag& dmu)
{
    detail::require_same_dim(dh0.dim(), dmu.dim(), "pack_unknowns");
    const Index n = dh0.dim();
    RealVector x(packed_size(n));
    Index k = 0;
    for (Index i = 0; i < n; ++i)
        for (Index j = i; j < n; ++j) x(k++) = dh0(i, j);
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) x(k++) = dmu(i, j);
    return x;
}

inline OperatorPair unpack_unknowns(const RealVector& x, Index n)
{
    if (x.size() != packed_size(n)) throw DimensionError("unpack_unknowns: wrong length");
    RealMatrix h = RealMatrix::Zero(n, n);
    RealMatrix m = RealMatrix::Zero(n, n);
    Index k = 0;
    for (Index i = 0; i < n; ++i)
        for (Index j = i; j < n; ++j) h(i, j) = h(j, i) = x(k++);
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) m(i, j) = m(j, i) = x(k++);
    return {RealSymmetric(std::move(h)), RealSymmetricZeroDiag(std::move(m))};
}

/// Reads the upper triangle only; for Hermitian input nothing is lost.
inline RealVector pack_equations(const ComplexMatrix& s)
{
    detail::require_square(s.rows(), s.cols(), "pack_equations");
    const Index n = s.rows();
    RealVector b(packed_size(n));
    Index k = 0;
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) {
            b(k++) = s(i, j).real();
            b(k++) = s(i, j).imag();
        }
    for (Index i = 0; i < n; ++i) b(k++) = s(i, i).real();
    return b;
}

inline HermitianMatrix unpack_equations(const RealVector& b, Index n)
{
    if (b.size() != packed_size(n)) throw DimensionError("unpack_equations: wrong length");
    ComplexMatrix s = ComplexMatrix::Zero(n, n);
    Index k = 0;
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) {
            s(i, j) = Complex(b(k), b(k + 1));
            s(j, i) = std::conj(s(i, j));
            k += 2;
        }
    for (Index i = 0; i < n; ++i) s(i, i) = b(k++);
    return HermitianMatrix(std::move(s));
}

// ---------------------------------------------------------------------------
// Residual targets.

enum class ResidualKind { kLog, kSkew };

inline HermitianMatrix residual_target(const UnitaryMatrix& u_final, const UnitaryMatrix& u_target, ResidualKind kind)
{
    detail::require_same_dim(u_final.dim(), u_target.dim(), "residual_target");
    const ComplexMatrix w = u_final.adjoint() * u_target.matrix();
    if (kind == ResidualKind::kLog) return unitary_log_principal(UnitaryMatrix(w));
    return HermitianMatrix::hermitized(kI * (w - w.adjoint()) * 0.5);
}

/// ||A - A^*||_F / 2 for A = i(U_N^* U_target - Id): how far the raw Newton
/// right-hand side is from being solvable.
inline double raw_rhs_antihermitian_defect(const UnitaryMatrix& u_final, const UnitaryMatrix& u_target)
{
    const Index n = u_final.dim();
    const ComplexMatrix a = kI * (u_final.adjoint() * u_target.matrix() - ComplexMatrix::Identity(n, n));
    return 0.5 * (a - a.adjoint()).norm();
}

// ---------------------------------------------------------------------------
// Assembly.

/// Column j is pack(dt sum_n U^* E_j U) for H0 basis elements and
/// pack(dt sum_n eps_n U^* E_j U) for mu basis elements, U = U_{n+1/2}.
inline RealMatrix assemble_system(const Trajectory& traj)
{
    const Index n = traj.final_state().dim();
    const Index size = packed_size(n);
    // Accumulate the images of the unit matrices e_i e_j^T first:
    // U^* e_i e_j^T U = (row i of U)^* (row j of U).
    std::vector<ComplexMatrix> plain(static_cast<std::size_t>(n * n), ComplexMatrix::Zero(n, n));
    std::vector<ComplexMatrix> weighted(static_cast<std::size_t>(n * n), ComplexMatrix::Zero(n, n));
    for (std::size_t step = 0; step < traj.midpoints.size(); ++step) {
        const ComplexMatrix& u = traj.midpoints[step];
        const double eps = traj.samples[step];
        for (Index i = 0; i < n; ++i)
            for (Index j = i; j < n; ++j) {
                const ComplexMatrix outer = u.row(i).adjoint() * u.row(j);
                const auto idx = static_cast<std::size_t>(i * n + j);
                plain[idx] += outer;
                weighted[idx] += eps * outer;
            }
    }

    const double dt = traj.grid.dt();
    auto image = [&](const std::vector<ComplexMatrix>& acc, Index i, Index j) {
        const ComplexMatrix& g = acc[static_cast<std::size_t>(i * n + j)];
        // E_ij = e_i e_j^T + e_j e_i^T for i < j, and U^* e_j e_i^T U = (U^* e_i e_j^T U)^*.
        return i == j ? ComplexMatrix(dt * g) : ComplexMatrix(dt * (g + g.adjoint()));
    };

    RealMatrix a(size, size);
    Index col = 0;
    for (Index i = 0; i < n; ++i)
        for (Index j = i; j < n; ++j) a.col(col++) = pack_equations(image(plain, i, j));
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) a.col(col++) = pack_equations(image(weighted, i, j));
    return a;
}

/// Same matrix through the vectorized form
///   vec(U^* X U) = M_U vec(X),  M_U = kron(1, U^*) .* kron(U^T, 1),
/// followed by symmetric column reduction and Hermitian row selection.
inline RealMatrix assemble_system_kron(const Trajectory& traj)
{
    const Index n = traj.final_state().dim();
    const Index n2 = n * n;
    const ComplexMatrix ones = ComplexMatrix::Ones(n, n);
    ComplexMatrix plain = ComplexMatrix::Zero(n2, n2);
    ComplexMatrix weighted = ComplexMatrix::Zero(n2, n2);
    auto kron = [](const ComplexMatrix& a, const ComplexMatrix& b) {
        ComplexMatrix k(a.rows() * b.rows(), a.cols() * b.cols());
        for (Index i = 0; i < a.rows(); ++i)
            for (Index j = 0; j < a.cols(); ++j) k.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        return k;
    };
    for (std::size_t step = 0; step < traj.midpoints.size(); ++step) {
        const ComplexMatrix& u = traj.midpoints[step];
        const ComplexMatrix m = kron(ones, u.adjoint()).cwiseProduct(kron(u.transpose(), ones));
        plain += m;
        weighted += traj.samples[step] * m;
    }
    plain *= traj.grid.dt();
    weighted *= traj.grid.dt();

    // Column-major vec: X_ij sits at i + j n.
    auto vec_index = [n](Index i, Index j) { return i + j * n; };
    auto column = [&](const ComplexMatrix& k, Index i, Index j) {
        Eigen::VectorXcd c = k.col(vec_index(i, j));
        if (i != j) c += k.col(vec_index(j, i));
        return c;
    };
    auto rows = [&](const Eigen::VectorXcd& c) {
        RealVector r(n2);
        Index k = 0;
        for (Index i = 0; i < n; ++i)
            for (Index j = i + 1; j < n; ++j) {
                r(k++) = c(vec_index(i, j)).real();
                r(k++) = c(vec_index(i, j)).imag();
            }
        for (Index i = 0; i < n; ++i) r(k++) = c(vec_index(i, i)).real();
        return r;
    };

    RealMatrix a(n2, n2);
    Index col = 0;
    for (Index i = 0; i < n; ++i)
        for (Index j = i; j < n; ++j) a.col(col++) = rows(column(plain, i, j));
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) a.col(col++) = rows(column(weighted, i, j));
    return a;
}

// ---------------------------------------------------------------------------
// Solvers.

struct NewtonOptions
{
    int max_iters = 30;
    double residual_tol = 1e-12;     // on ||phi - U_target||_F
    double step_tol = 1e-14;         // on ||dH0||_F + ||dmu||_F
    ResidualKind residual_kind = ResidualKind::kLog;
    double condition_warn = 1e12;    // above: least-squares solve, reported
    double singular_rcond = 1e-15;   // at or below: system declared singular
    int divergence_window = 5;       // consecutive residual increases before giving up
};

enum class SolveStatus { kConverged, kMaxIterations, kStagnated, kSingular, kDiverged };

inline const char* to_string(SolveStatus s)
{
    switch (s) {
    case SolveStatus::kConverged: return "converged";
    case SolveStatus::kMaxIterations: return "max_iterations";
    case SolveStatus::kStagnated: return "stagnated";
    case SolveStatus::kSingular: return "singular";
    case SolveStatus::kDiverged: return "diverged";
    }
    return "unknown";
}

/// Record 0 describes the initial guess; record k >= 1 the iterate after the
/// k-th update, together with the step and the system that produced it.
struct IterationRecord
{
    int iter = 0;
    double residual = 0.0;
    double step_h0 = 0.0;
    double step_mu = 0.0;
    std::optional<double> error_h0;
    std::optional<double> error_mu;
    std::optional<double> condition;
    bool least_squares = false;
    bool skew_fallback = false;  // log target hit the branch cut; skew used instead
};

struct SolveReport
{
    bool converged = false;
    SolveStatus status = SolveStatus::kMaxIterations;
    std::string diagnosis;
    std::string solver;  // "full" or "frozen"
    ResidualKind residual_kind = ResidualKind::kLog;
    std::vector<IterationRecord> iterations;
    OperatorPair final_pair;

    /// Newton updates performed.
    int steps() const { return iterations.empty() ? 0 : iterations.back().iter; }
    double final_residual() const { return iterations.back().residual; }
};

namespace detail {

inline double residual_norm(const UnitaryMatrix& u_final, const UnitaryMatrix& target)
{
    return (u_final.matrix() - target.matrix()).norm();
}

inline IterationRecord make_record(int k, const Trajectory& traj, const ProblemInstance& inst, const OperatorPair& pair,
                                   const std::optional<OperatorPair>& truth)
{
    IterationRecord r;
    r.iter = k;
    r.residual = residual_norm(traj.final_state(), inst.u_target);
    if (truth) {
        r.error_h0 = (pair.h0.matrix() - truth->h0.matrix()).norm();
        r.error_mu = (pair.mu.matrix() - truth->mu.matrix()).norm();
    }
    return r;
}

// First zero column of the assembled matrix, if any.
inline std::optional<Index> vanishing_column(const RealMatrix& a)
{
    for (Index c = 0; c < a.cols(); ++c)
        if (a.col(c).cwiseAbs().maxCoeff() == 0.0) return c;
    return std::nullopt;
}

inline std::string describe_column(Index c, Index n)
{
    const Index n_h = n * (n + 1) / 2;
    return c < n_h ? "H0 unknown " + std::to_string(c) : "mu unknown " + std::to_string(c - n_h);
}

// Factorized system; immutable once built.
class LinearSystem
{
public:
    LinearSystem(RealMatrix a, const NewtonOptions& opts) : a_(std::move(a)), lu_(a_)
    {
        const Index n = static_cast<Index>(std::lround(std::sqrt(static_cast<double>(a_.rows()))));
        if (auto c = vanishing_column(a_)) {
            singular_ = true;
            diagnosis_ = "assembled matrix is singular: column for " + describe_column(*c, n)
                         + " vanishes (the field does not couple that unknown)";
            rcond_ = 0.0;
            return;
        }
        rcond_ = lu_.rcond();
        if (!std::isfinite(rcond_) || rcond_ <= opts.singular_rcond) {
            singular_ = true;
            diagnosis_ = "assembled matrix is numerically singular (condition estimate "
                         + detail::sci(condition()) + ")";
            return;
        }
        if (condition() > opts.condition_warn) {
            least_squares_ = true;
            cod_.emplace(a_);
        }
    }

    bool singular() const { return singular_; }
    bool least_squares() const { return least_squares_; }
    double condition() const { return rcond_ > 0.0 ? 1.0 / rcond_ : std::numeric_limits<double>::infinity(); }
    const std::string& diagnosis() const { return diagnosis_; }

    RealVector solve(const RealVector& b) const { return least_squares_ ? RealVector(cod_->solve(b)) : RealVector(lu_.solve(b)); }

private:
    RealMatrix a_;
    Eigen::PartialPivLU<RealMatrix> lu_;
    std::optional<Eigen::CompleteOrthogonalDecomposition<RealMatrix>> cod_;
    double rcond_ = 0.0;
    bool singular_ = false;
    bool least_squares_ = false;
    std::string diagnosis_;
};

inline HermitianMatrix target_with_fallback(const UnitaryMatrix& u_final, const UnitaryMatrix& u_target,
                                            ResidualKind kind, bool& fell_back)
{
    fell_back = false;
    if (kind == ResidualKind::kLog) {
        try {
            return residual_target(u_final, u_target, ResidualKind::kLog);
        } catch (const BranchAmbiguityError&) {
            fell_back = true;
        }
    }
    return residual_target(u_final, u_target, ResidualKind::kSkew);
}

// Shared loop; `system_for` returns the factorized system for the current trajectory.
template <typename SystemFor>
SolveReport newton_loop(const ProblemInstance& inst, const OperatorPair& init, const NewtonOptions& opts,
                        const std::optional<OperatorPair>& truth, const char* solver, SystemFor&& system_for)
{
    detail::require_same_dim(init.h0.dim(), inst.dim(), "newton");
    detail::require_same_dim(init.mu.dim(), inst.dim(), "newton");
    SolveReport report;
    report.solver = solver;
    report.residual_kind = opts.residual_kind;
    OperatorPair pair = init;
    Trajectory traj = propagate(pair.h0, pair.mu, inst);
    report.iterations.push_back(make_record(0, traj, inst, pair, truth));

    int growth = 0;
    auto finish = [&](SolveStatus s, std::string why) {
        report.status = s;
        report.converged = s == SolveStatus::kConverged;
        report.diagnosis = std::move(why);
        report.final_pair = pair;
        return report;
    };
    if (report.iterations.back().residual <= opts.residual_tol) return finish(SolveStatus::kConverged, "");

    for (int k = 1; k <= opts.max_iters; ++k) {
        const LinearSystem& system = system_for(traj);
        if (system.singular()) return finish(SolveStatus::kSingular, system.diagnosis());

        bool fell_back = false;
        const HermitianMatrix s = target_with_fallback(traj.final_state(), inst.u_target, opts.residual_kind, fell_back);
        const RealVector x = system.solve(pack_equations(s.matrix()));
        if (!x.allFinite()) return finish(SolveStatus::kSingular, "linear solve produced non-finite values");
        const OperatorPair step = unpack_unknowns(x, inst.dim());
        pair = {pair.h0 + step.h0, pair.mu + step.mu};
        try {
            traj = propagate(pair.h0, pair.mu, inst);
        } catch (const StructureError& e) {
            return finish(SolveStatus::kDiverged, std::string("iterate left the unitary group: ") + e.what());
        }

        IterationRecord rec = make_record(k, traj, inst, pair, truth);
        rec.step_h0 = step.h0.matrix().norm();
        rec.step_mu = step.mu.matrix().norm();
        rec.condition = system.condition();
        rec.least_squares = system.least_squares();
        rec.skew_fallback = fell_back;
        const double previous = report.iterations.back().residual;
        report.iterations.push_back(rec);

        if (rec.residual <= opts.residual_tol) return finish(SolveStatus::kConverged, "");
        if (rec.step_h0 + rec.step_mu <= opts.step_tol)
            return finish(SolveStatus::kStagnated, "step below step_tol before reaching residual_tol");
        growth = rec.residual > previous ? growth + 1 : 0;
        if (growth >= opts.divergence_window)
            return finish(SolveStatus::kDiverged,
                          "residual grew for " + std::to_string(growth) + " consecutive iterations");
    }
    return finish(SolveStatus::kMaxIterations, "max_iters reached before residual_tol");
}

} // namespace detail

/// Full Newton: the system is reassembled from the current trajectory every step.
inline SolveReport newton_solve(const ProblemInstance& inst, const OperatorPair& init, const NewtonOptions& opts = {},
                                const std::optional<OperatorPair>& truth = std::nullopt)
{
    std::optional<detail::LinearSystem> system;
    return detail::newton_loop(inst, init, opts, truth, "full", [&](const Trajectory& traj) -> const detail::LinearSystem& {
        system.emplace(assemble_system(traj), opts);
        return *system;
    });
}

/// Quasi-Newton with the system frozen at a reference pair: assembled and
/// factorized once, only the right-hand side changes between iterations.
inline SolveReport frozen_newton_solve(const ProblemInstance& inst, const OperatorPair& init,
                                       const OperatorPair& reference, const NewtonOptions& opts = {},
                                       const std::optional<OperatorPair>& truth = std::nullopt)
{
    const detail::LinearSystem system(assemble_system(propagate(reference.h0, reference.mu, inst)), opts);
    return detail::newton_loop(inst, init, opts, truth, "frozen",
                               [&](const Trajectory&) -> const detail::LinearSystem& { return system; });
}

/// Least-squares slope of log e_{k+1} against log e_k over consecutive errors
/// above `floor`; about 2 for quadratic, 1 for linear convergence.
inline std::optional<double> convergence_order(const std::vector<double>& errors, double floor = 1e-13)
{
    std::vector<std::pair<double, double>> pts;
    for (std::size_t k = 0; k + 1 < errors.size(); ++k)
        if (errors[k] > floor && errors[k + 1] > floor && errors[k] < 1.0)
            pts.emplace_back(std::log(errors[k]), std::log(errors[k + 1]));
    if (pts.size() < 2) return std::nullopt;
    double mx = 0, my = 0;
    for (auto [x, y] : pts) { mx += x; my += y; }
    mx /= static_cast<double>(pts.size());
    my /= static_cast<double>(pts.size());
    double sxy = 0, sxx = 0;
    for (auto [x, y] : pts) { sxy += (x - mx) * (y - my); sxx += (x - mx) * (x - mx); }
    if (sxx == 0.0) return std::nullopt;
    return sxy / sxx;
}

} // namespace opident
