#pragma once

// The numerical experiment preset: N_d = 5, T = 2 pi T0 with T0 = 10,
// N_T = 100, eps = sin t, truth pairs with entries drawn uniform in [-1, 1].

#include <cstdint>
#include <numbers>

#include "opident/fields.hpp"
#include "opident/newton.hpp"
#include "opident/propagator.hpp"
#include "opident/random.hpp"

namespace opident {

struct Preset
{
    Index dim = 5;
    double t0 = 10.0;
    Index n_t = 100;
    std::string field = "sin";

    TimeGrid grid() const { return TimeGrid(2.0 * std::numbers::pi * t0, n_t); }
};

/// H0 then mu, each from one uniform matrix.
inline OperatorPair random_pair(Rng& rng, Index dim)
{
    RealSymmetric h0 = random_symmetric(rng, dim);
    RealSymmetricZeroDiag mu = random_zero_diag(rng, dim);
    return {std::move(h0), std::move(mu)};
}

/// Seed stream for perturbations, kept apart from the one that drew the truth.
inline std::uint64_t perturbation_seed(std::uint64_t seed) { return seed ^ 0x9e3779b97f4a7c15ULL; }

/// truth + (dH, dmu) with random directions scaled to ||dH||_F = rho ||H*||_F
/// and ||dmu||_F = rho ||mu*||_F.
inline OperatorPair perturbed_pair(const OperatorPair& truth, double rho, Rng& rng)
{
    const Index n = truth.h0.dim();
    const RealSymmetric dh = random_symmetric(rng, n);
    const RealSymmetricZeroDiag dm = random_zero_diag(rng, n);
    auto scale = [rho](double target, double norm) { return norm > 0.0 ? rho * target / norm : 0.0; };
    const double sh = scale(truth.h0.matrix().norm(), dh.matrix().norm());
    const double sm = scale(truth.mu.matrix().norm(), dm.matrix().norm());
    return {truth.h0 + sh * dh, truth.mu + sm * dm};
}

struct GeneratedProblem
{
    ProblemInstance instance;
    OperatorPair truth;
};

/// Draws a truth pair from `seed` and sets u_target = phi(truth).
inline GeneratedProblem generate_problem(std::uint64_t seed, Index dim, const TimeGrid& grid, LaserField field,
                                         std::optional<UnitaryMatrix> u_init = std::nullopt)
{
    Rng rng(seed);
    OperatorPair truth = random_pair(rng, dim);
    UnitaryMatrix init = u_init ? *u_init : UnitaryMatrix::identity(dim);
    ProblemInstance inst(grid, std::move(field), init, init);
    inst.u_target = phi(truth.h0, truth.mu, inst);
    return {std::move(inst), std::move(truth)};
}

inline GeneratedProblem generate_problem(std::uint64_t seed, const Preset& preset = {})
{
    return generate_problem(seed, preset.dim, preset.grid(), field_preset(preset.field));
}

} // namespace opident
