#pragma once

// Closed-form inverse of the linearized map around a field-free trajectory.
//
// With mu = 0 and the centered initial state U_init = exp(i H0 T/2), the free
// trajectory is U0(t) = V0^* exp(i Lambda (t - T/2)) V0 where H0 = Q diag(d) Q^T,
// Lambda = -diag(d) and V0 = Q^T. In the rotated basis the linearized equation
//
//   int_0^T U0(t)^* (dH0 + eps(t) dmu) U0(t) dt = V := i U0(T)^* V'
//
// decouples entrywise. Writing v = V0 V V0^*, h = V0 dH0 V0^*, m = V0 dmu V0^*:
//
//   v_ab = h_ab * 2 sin(dl_ab T/2) / dl_ab + m_ab * conj(epsilon_hat(dl_ab))   (a != b)
//   v_aa = h_aa * T + m_aa * int eps
//
// where dl_ab = lambda_a - lambda_b. With m_aa = 0, h and m follow directly.
// The map is invertible when the gaps are nonzero (cond1), Im epsilon_hat does
// not vanish on any gap (cond2) and sin(dl_ab T/2) stays away from zero.

#include <limits>
#include <string>
#include <vector>

#include "opident/fields.hpp"
#include "opident/linalg.hpp"
#include "opident/propagator.hpp"
#include "opident/random.hpp"

namespace opident {

struct SpectralData
{
    RealMatrix q;            // H0 = Q diag(d) Q^T
    UnitaryMatrix v0;        // Q^T
    RealVector lambda;       // -d
    RealMatrix gaps;         // lambda_a - lambda_b
    ComplexMatrix eps_hat;   // epsilon_hat(gaps(a, b))
    TimeGrid grid;

    Index dim() const { return lambda.size(); }
};

inline SpectralData spectral_decompose(const RealSymmetric& h0, const TimeGrid& grid, const LaserField& field,
                                       IntegralMode mode = IntegralMode::kAuto)
{
    const auto eig = symmetric_eig(h0);
    const Index n = h0.dim();
    SpectralData out{eig.vectors,
                     UnitaryMatrix(eig.vectors.transpose().cast<Complex>()),
                     -eig.values,
                     RealMatrix::Zero(n, n),
                     ComplexMatrix::Zero(n, n),
                     grid};
    const Complex mean = epsilon_hat(field, 0.0, grid, mode);
    for (Index a = 0; a < n; ++a) {
        out.eps_hat(a, a) = mean;
        for (Index b = a + 1; b < n; ++b) {
            out.gaps(a, b) = out.lambda(a) - out.lambda(b);
            out.gaps(b, a) = -out.gaps(a, b);
            out.eps_hat(a, b) = epsilon_hat(field, out.gaps(a, b), grid, mode);
            out.eps_hat(b, a) = std::conj(out.eps_hat(a, b));
        }
    }
    return out;
}

/// exp(i H0 T/2): the initial state for which U0(t) has the centered form above.
inline UnitaryMatrix centered_initial_state(const RealSymmetric& h0, double final_time)
{
    return exp_minus_i(HermitianMatrix::from_real(h0), -0.5 * final_time);
}

/// V0^* exp(i Lambda t) V0.
inline UnitaryMatrix free_evolution(const SpectralData& spec, double t)
{
    Eigen::VectorXcd phases(spec.dim());
    for (Index a = 0; a < spec.dim(); ++a) phases(a) = std::exp(kI * (spec.lambda(a) * t));
    const ComplexMatrix& v0 = spec.v0.matrix();
    return UnitaryMatrix(v0.adjoint() * phases.asDiagonal() * v0);
}

// ---------------------------------------------------------------------------
// Identifiability conditions.

struct ConditionTolerances
{
    double gap = 0.0;
    double eps = 0.0;
    double sine = 1e-10;
};

/// gap = 1e-8 max|lambda|, eps = 1e-8 ||eps||_L1, sine = 1e-10.
inline ConditionTolerances default_condition_tolerances(const SpectralData& spec, const LaserField& field)
{
    const double lambda_max = spec.dim() > 0 ? spec.lambda.cwiseAbs().maxCoeff() : 0.0;
    return {1e-8 * lambda_max, 1e-8 * l1_norm(field, spec.grid), 1e-10};
}

struct OffendingPair
{
    Index a = 0;
    Index b = 0;
    bool gap = false;    // violates cond1
    bool field = false;  // violates cond2
};

struct ConditionReport
{
    bool cond1_ok = true;
    double min_gap = std::numeric_limits<double>::infinity();
    bool cond2_ok = true;
    double min_eps_hat_i = std::numeric_limits<double>::infinity();
    std::vector<OffendingPair> offending_pairs;  // a < b

    bool ok() const { return cond1_ok && cond2_ok; }
};

inline ConditionReport check_identifiability(const SpectralData& spec, double tol_gap, double tol_eps)
{
    ConditionReport report;
    for (Index a = 0; a < spec.dim(); ++a) {
        for (Index b = a + 1; b < spec.dim(); ++b) {
            const double gap = std::abs(spec.gaps(a, b));
            const double im = std::abs(spec.eps_hat(a, b).imag());
            report.min_gap = std::min(report.min_gap, gap);
            report.min_eps_hat_i = std::min(report.min_eps_hat_i, im);
            OffendingPair pair{a, b, !(gap > tol_gap), !(im > tol_eps)};
            if (pair.gap || pair.field) report.offending_pairs.push_back(pair);
        }
    }
    // With fewer than two levels there are no pairs and the minima stay +inf.
    report.cond1_ok = report.min_gap > tol_gap;
    report.cond2_ok = report.min_eps_hat_i > tol_eps;
    return report;
}

inline ConditionReport check_identifiability(const SpectralData& spec, const ConditionTolerances& tol)
{
    return check_identifiability(spec, tol.gap, tol.eps);
}

class ConditionError : public Error
{
public:
    ConditionError(const std::string& what, ConditionReport report) : Error(what), report_(std::move(report)) {}
    const ConditionReport& report() const { return report_; }

private:
    ConditionReport report_;
};

class SingularDenominatorError : public Error
{
public:
    SingularDenominatorError(Index a, Index b)
        : Error("psi_inverse: sin(gap T/2) vanishes for pair (" + std::to_string(a) + "," + std::to_string(b) + ")"),
          a_(a), b_(b)
    {}
    Index a() const { return a_; }
    Index b() const { return b_; }

private:
    Index a_;
    Index b_;
};

// ---------------------------------------------------------------------------
// Tangent vectors at a unitary basepoint.

class TangentVector
{
public:
    TangentVector(ComplexMatrix entries, UnitaryMatrix basepoint, double tol = kDefaultTolerances.tangency)
        : m_(std::move(entries)), base_(std::move(basepoint))
    {
        detail::require_same_dim(m_.rows(), base_.dim(), "TangentVector");
        detail::require_square(m_.rows(), m_.cols(), "TangentVector");
        const double defect = tangency_defect(m_, base_);
        if (!(defect <= tol))
            throw StructureError("TangentVector: tangency defect " + detail::sci(defect) + " exceeds tolerance");
    }

    /// ||M^* B + B^* M||_F.
    static double tangency_defect(const ComplexMatrix& m, const UnitaryMatrix& base)
    {
        return (m.adjoint() * base.matrix() + base.adjoint() * m).norm();
    }

    const ComplexMatrix& matrix() const { return m_; }
    const UnitaryMatrix& basepoint() const { return base_; }
    Index dim() const { return m_.rows(); }

    friend TangentVector operator*(double c, const TangentVector& t) { return TangentVector(c * t.m_, t.base_); }

private:
    ComplexMatrix m_;
    UnitaryMatrix base_;
};

/// basepoint * (i S) for S Hermitian.
inline TangentVector tangent_from_hermitian(const UnitaryMatrix& basepoint, const HermitianMatrix& s)
{
    return TangentVector(basepoint.matrix() * (kI * s.matrix()), basepoint);
}

inline TangentVector random_tangent(const UnitaryMatrix& basepoint, std::uint64_t seed)
{
    Rng rng(seed);
    return tangent_from_hermitian(basepoint, random_hermitian(rng, basepoint.dim()));
}

// ---------------------------------------------------------------------------
// The inverse map.

/// Which basis change reads the coefficients v_ab out of V. kProof (V0 V V0^*)
/// is the one consistent with U0(t) = V0^* exp(i Lambda (t-T/2)) V0; kStatement
/// (V0^* V V0) is kept for comparison and does not invert the map in general.
enum class CoefficientConvention { kProof, kStatement };

struct InversePair
{
    RealSymmetric dh0;
    RealSymmetric dmu;         // symmetric; its diagonal is generally nonzero
    RealMatrix h_rotated;      // h = V0 dH0 V0^*
    RealMatrix m_rotated;      // m = V0 dmu V0^*, zero diagonal
    double structure_defect = 0.0;  // largest pre-projection asymmetry / imaginary residue
};

struct InverseOptions
{
    ConditionTolerances conditions;
    bool conditions_set = false;  // false: use default_condition_tolerances
    CoefficientConvention convention = CoefficientConvention::kProof;
    Tolerances tol = kDefaultTolerances;
};

/// (dH0, dmu) with dphi(H0, 0)(dH0, dmu) = V' in continuous time.
inline InversePair psi_inverse(const TangentVector& vprime, const SpectralData& spec, const LaserField& field,
                               const UnitaryMatrix& u0_final, const InverseOptions& opts = {})
{
    const Index n = spec.dim();
    detail::require_same_dim(vprime.dim(), n, "psi_inverse");
    detail::require_same_dim(u0_final.dim(), n, "psi_inverse");
    const double T = spec.grid.final_time();

    const ConditionTolerances ctol = opts.conditions_set ? opts.conditions : default_condition_tolerances(spec, field);
    ConditionReport report = check_identifiability(spec, ctol);
    if (!report.ok()) throw ConditionError("psi_inverse: identifiability conditions violated", std::move(report));

    const ComplexMatrix big_v = kI * (u0_final.adjoint() * vprime.matrix());
    const double scale = std::max(1.0, big_v.norm());
    const double herm_defect = (big_v - big_v.adjoint()).norm();
    if (herm_defect > opts.tol.inverse_structure * scale)
        throw StructureError("psi_inverse: V = i U0(T)^* V' is not Hermitian; V' is not tangent at u0_final");

    const ComplexMatrix& v0 = spec.v0.matrix();
    const ComplexMatrix v = opts.convention == CoefficientConvention::kProof ? ComplexMatrix(v0 * big_v * v0.adjoint())
                                                                             : ComplexMatrix(v0.adjoint() * big_v * v0);

    RealMatrix h = RealMatrix::Zero(n, n);
    RealMatrix m = RealMatrix::Zero(n, n);
    double defect = herm_defect / scale;
    for (Index a = 0; a < n; ++a) {
        defect = std::max(defect, std::abs(v(a, a).imag()) / scale);
        h(a, a) = v(a, a).real() / T;
        for (Index b = 0; b < n; ++b) {
            if (a == b) continue;
            const double dl = spec.gaps(a, b);
            const double sine = std::sin(0.5 * dl * T);
            if (std::abs(sine) < ctol.sine) throw SingularDenominatorError(std::min(a, b), std::max(a, b));
            const Complex e = std::conj(spec.eps_hat(a, b));
            m(a, b) = v(a, b).imag() / e.imag();
            h(a, b) = (v(a, b).real() - m(a, b) * e.real()) * dl / (2.0 * sine);
        }
    }
    if (defect > opts.tol.inverse_structure)
        throw StructureError("psi_inverse: diagonal coefficients are not real");

    const RealMatrix& q = spec.q;  // V0^* = Q
    const RealMatrix dh = q * h * q.transpose();
    const RealMatrix dm = q * m * q.transpose();
    auto asym = [](const RealMatrix& x) { return (x - x.transpose()).cwiseAbs().maxCoeff(); };
    defect = std::max({defect, asym(dh) / scale, asym(dm) / scale});
    if (defect > opts.tol.inverse_structure)
        throw StructureError("psi_inverse: recovered variations are not symmetric");

    return {RealSymmetric::symmetrized(dh), RealSymmetric::symmetrized(dm), h, m, defect};
}

// ---------------------------------------------------------------------------
// Round-trip validation: dphi_sum(psi(V')) against V' on the discrete trajectory.

struct RoundTripResult
{
    double relative_error = 0.0;
    double vprime_norm = 0.0;
    ConditionReport conditions;
    double structure_defect = 0.0;
};

/// Propagates the field-free system from the centered initial state with the
/// given sampling, draws V' = U_N (i S) from `seed`, inverts and maps back.
inline RoundTripResult roundtrip(const RealSymmetric& h0, const LaserField& field, const TimeGrid& grid,
                                 std::uint64_t seed, FieldSampling sampling = FieldSampling::kMidpoint,
                                 const InverseOptions& opts = {})
{
    const Index n = h0.dim();
    const UnitaryMatrix init = centered_initial_state(h0, grid.final_time());
    const ProblemInstance inst(grid, field, init, init, sampling);
    const Trajectory traj = propagate(h0, RealSymmetricZeroDiag::zero(n), inst);
    const SpectralData spec = spectral_decompose(h0, grid, field);
    const TangentVector vprime = random_tangent(traj.final_state(), seed);
    const InversePair pair = psi_inverse(vprime, spec, field, traj.final_state(), opts);
    const ComplexMatrix back = dphi_sum(traj, pair.dh0, pair.dmu);

    const ConditionTolerances ctol = opts.conditions_set ? opts.conditions : default_condition_tolerances(spec, field);
    RoundTripResult out;
    out.vprime_norm = vprime.matrix().norm();
    out.relative_error = (back - vprime.matrix()).norm() / out.vprime_norm;
    out.conditions = check_identifiability(spec, ctol);
    out.structure_defect = pair.structure_defect;
    return out;
}

} // namespace opident
