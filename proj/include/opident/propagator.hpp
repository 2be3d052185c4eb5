#pragma once

// Crank-Nicolson propagation of i dU/dt = (H0 + eps(t) mu) U:
//
//   (Id + L_n) U_{n+1} = (Id - L_n) U_n,   L_n = (i dt / 2)(H0 + eps_n mu),
//
// together with the exact derivative of the discrete final state with respect
// to (H0, mu), computed two ways: by differentiating the recursion, and by the
// closed summation over midpoints U_{n+1/2} = (U_{n+1} + U_n) / 2,
//
//   U_N^* dU_N = -i dt sum_n U_{n+1/2}^* (dH0 + eps_n dmu) U_{n+1/2}.

#include <vector>

#include <Eigen/LU>

#include "opident/fields.hpp"
#include "opident/linalg.hpp"

namespace opident {

struct ProblemInstance
{
    TimeGrid grid;
    LaserField field;
    UnitaryMatrix u_init;
    UnitaryMatrix u_target;
    FieldSampling sampling = FieldSampling::kLeft;

    ProblemInstance(TimeGrid g, LaserField f, UnitaryMatrix init, UnitaryMatrix target,
                    FieldSampling where = FieldSampling::kLeft)
        : grid(g), field(std::move(f)), u_init(std::move(init)), u_target(std::move(target)), sampling(where)
    {
        detail::require_same_dim(u_init.dim(), u_target.dim(), "ProblemInstance");
    }

    Index dim() const { return u_init.dim(); }

    ProblemInstance with_field(LaserField f) const
    {
        return ProblemInstance(grid, std::move(f), u_init, u_target, sampling);
    }
};

struct Trajectory
{
    TimeGrid grid;
    std::vector<UnitaryMatrix> states;       // U_0 .. U_N
    std::vector<ComplexMatrix> midpoints;    // U_{n+1/2}
    std::vector<double> samples;             // eps_n

    const UnitaryMatrix& final_state() const { return states.back(); }
};

namespace detail {

inline ComplexMatrix generator(const RealSymmetric& h0, const RealSymmetric& mu, double eps)
{
    return (h0.matrix() + eps * mu.matrix()).cast<Complex>();
}

inline ComplexMatrix generator(const RealSymmetric& h0, const RealSymmetricZeroDiag& mu, double eps)
{
    return generator(h0, mu.as_symmetric(), eps);
}

template <typename Dipole>
void require_pair_dims(const RealSymmetric& h0, const Dipole& mu, Index n, const char* what)
{
    require_same_dim(h0.dim(), n, what);
    require_same_dim(mu.dim(), n, what);
}

} // namespace detail

/// One Cayley step U_{n+1} = (Id + L)^{-1} (Id - L) U_n.
inline UnitaryMatrix cn_step(const UnitaryMatrix& u, const RealSymmetric& h0, const RealSymmetricZeroDiag& mu,
                             double eps, double dt)
{
    detail::require_pair_dims(h0, mu, u.dim(), "cn_step");
    const Index n = u.dim();
    const ComplexMatrix l = (kI * (0.5 * dt)) * detail::generator(h0, mu, eps);
    const ComplexMatrix id = ComplexMatrix::Identity(n, n);
    Eigen::PartialPivLU<ComplexMatrix> lu(id + l);
    ComplexMatrix next = lu.solve((id - l) * u.matrix());
    return UnitaryMatrix(std::move(next));
}

inline Trajectory propagate(const RealSymmetric& h0, const RealSymmetricZeroDiag& mu, const ProblemInstance& inst)
{
    detail::require_pair_dims(h0, mu, inst.dim(), "propagate");
    Trajectory traj{inst.grid, {}, {}, sample(inst.field, inst.grid, inst.sampling)};
    const auto steps = static_cast<std::size_t>(inst.grid.steps());
    traj.states.reserve(steps + 1);
    traj.midpoints.reserve(steps);
    traj.states.push_back(inst.u_init);
    const double dt = inst.grid.dt();
    for (std::size_t n = 0; n < steps; ++n) {
        traj.states.push_back(cn_step(traj.states[n], h0, mu, traj.samples[n], dt));
        traj.midpoints.push_back(0.5 * (traj.states[n + 1].matrix() + traj.states[n].matrix()));
    }
    return traj;
}

/// Final state U_N of the discrete dynamics.
inline UnitaryMatrix phi(const RealSymmetric& h0, const RealSymmetricZeroDiag& mu, const ProblemInstance& inst)
{
    detail::require_pair_dims(h0, mu, inst.dim(), "phi");
    const auto eps = sample(inst.field, inst.grid, inst.sampling);
    UnitaryMatrix u = inst.u_init;
    for (double e : eps) u = cn_step(u, h0, mu, e, inst.grid.dt());
    return u;
}

/// dU_N by differentiating the recursion:
///   dU_{n+1} = (Id + L_n)^{-1} [ (Id - L_n) dU_n - dL_n (U_n + U_{n+1}) ].
/// The variation dmu may carry a diagonal; the map is linear on all of S_R.
inline ComplexMatrix dphi_recursive(const RealSymmetric& h0, const RealSymmetricZeroDiag& mu,
                                    const RealSymmetric& dh0, const RealSymmetric& dmu,
                                    const ProblemInstance& inst)
{
    detail::require_pair_dims(h0, mu, inst.dim(), "dphi_recursive");
    detail::require_pair_dims(dh0, dmu, inst.dim(), "dphi_recursive");
    const Index dim = inst.dim();
    const double dt = inst.grid.dt();
    const ComplexMatrix id = ComplexMatrix::Identity(dim, dim);
    const auto eps = sample(inst.field, inst.grid, inst.sampling);

    ComplexMatrix u = inst.u_init.matrix();
    ComplexMatrix du = ComplexMatrix::Zero(dim, dim);
    for (double e : eps) {
        const ComplexMatrix l = (kI * (0.5 * dt)) * detail::generator(h0, mu, e);
        const ComplexMatrix dl = (kI * (0.5 * dt)) * detail::generator(dh0, dmu, e);
        Eigen::PartialPivLU<ComplexMatrix> lu(id + l);
        const ComplexMatrix next = lu.solve((id - l) * u);
        du = lu.solve((id - l) * du - dl * (u + next));
        u = next;
    }
    return du;
}

inline ComplexMatrix dphi_recursive(const RealSymmetric& h0, const RealSymmetricZeroDiag& mu,
                                    const RealSymmetric& dh0, const RealSymmetricZeroDiag& dmu,
                                    const ProblemInstance& inst)
{
    return dphi_recursive(h0, mu, dh0, dmu.as_symmetric(), inst);
}

/// dt * sum_n U_{n+1/2}^* (dH0 + eps_n dmu) U_{n+1/2}; Hermitian for symmetric input.
inline ComplexMatrix linearized_sum(const Trajectory& traj, const RealSymmetric& dh0, const RealSymmetric& dmu)
{
    ComplexMatrix acc = ComplexMatrix::Zero(dh0.dim(), dh0.dim());
    for (std::size_t n = 0; n < traj.midpoints.size(); ++n) {
        const ComplexMatrix& m = traj.midpoints[n];
        acc += m.adjoint() * detail::generator(dh0, dmu, traj.samples[n]) * m;
    }
    return traj.grid.dt() * acc;
}

/// dU_N = U_N (-i dt sum_n U_{n+1/2}^* (dH0 + eps_n dmu) U_{n+1/2}).
inline ComplexMatrix dphi_sum(const Trajectory& traj, const RealSymmetric& dh0, const RealSymmetric& dmu)
{
    const Index dim = traj.final_state().dim();
    detail::require_pair_dims(dh0, dmu, dim, "dphi_sum");
    return traj.final_state().matrix() * (-kI * linearized_sum(traj, dh0, dmu));
}

inline ComplexMatrix linearized_sum(const Trajectory& traj, const RealSymmetric& dh0, const RealSymmetricZeroDiag& dmu)
{
    return linearized_sum(traj, dh0, dmu.as_symmetric());
}

inline ComplexMatrix dphi_sum(const Trajectory& traj, const RealSymmetric& dh0, const RealSymmetricZeroDiag& dmu)
{
    return dphi_sum(traj, dh0, dmu.as_symmetric());
}

} // namespace opident
