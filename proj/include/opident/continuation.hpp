#pragma once

// Continuation in the field: march theta from 0 to 1 along
// eps^theta = (1 - theta) eps0 + theta eps1, solving the identification problem
// at each theta with Newton warm-started from the previous solution. The
// caller supplies a pair that already solves the problem under eps0.

#include <cmath>
#include <optional>
#include <vector>

#include "opident/fields.hpp"
#include "opident/newton.hpp"
#include "opident/propagator.hpp"

namespace opident {

enum class SolverKind { kFull, kFrozen };

struct ContinuationPlan
{
    LaserField field0;
    LaserField field1;
    double delta_theta = 0.25;
    NewtonOptions inner = [] {
        NewtonOptions o;
        o.max_iters = 10;
        return o;
    }();
    SolverKind solver = SolverKind::kFull;
    int max_halvings = 3;        // adaptive refinement on inner failure; 0 disables
    double anchor_factor = 10.0; // anchor must hit the target within anchor_factor * inner.residual_tol

    /// Number of uniform steps 1 / delta_theta; rejects schedules that miss theta = 1.
    int steps() const
    {
        if (!(delta_theta > 0.0 && delta_theta <= 1.0))
            throw ArgumentError("ContinuationPlan: delta_theta must lie in (0, 1]");
        const double k = 1.0 / delta_theta;
        const double rounded = std::round(k);
        if (std::abs(k - rounded) > 1e-9)
            throw ArgumentError("ContinuationPlan: 1/delta_theta must be an integer");
        return static_cast<int>(rounded);
    }
};

struct ContinuationStep
{
    double theta_from = 0.0;
    double theta = 0.0;
    int depth = 0;  // 0 on the uniform schedule; d > 0 after d halvings
    SolveReport report;
};

struct ContinuationResult
{
    bool converged = false;
    OperatorPair final_pair;
    std::vector<ContinuationStep> steps;
    std::optional<double> failed_theta;  // first theta that could not be reached
    int halvings_used = 0;               // deepest refinement level used
    double anchor_residual = 0.0;
};

class AnchorError : public Error
{
public:
    AnchorError(const std::string& what, double residual) : Error(what), residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

namespace detail {

inline SolveReport inner_solve(const ProblemInstance& inst, const OperatorPair& start, const ContinuationPlan& plan)
{
    return plan.solver == SolverKind::kFull ? newton_solve(inst, start, plan.inner)
                                            : frozen_newton_solve(inst, start, start, plan.inner);
}

// Reach theta_to from a solution at theta_from, splitting the interval in two
// on failure until depth == max_halvings.
inline bool advance(const ProblemInstance& inst, const ContinuationPlan& plan, double theta_from, double theta_to,
                    int depth, OperatorPair& pair, ContinuationResult& out)
{
    const ProblemInstance at_theta = inst.with_field(interpolate(plan.field0, plan.field1, theta_to, inst.grid, inst.sampling));
    SolveReport report = inner_solve(at_theta, pair, plan);
    const bool ok = report.converged;
    if (ok || depth >= plan.max_halvings) {
        out.steps.push_back({theta_from, theta_to, depth, report});
        if (ok) {
            pair = report.final_pair;
            out.halvings_used = std::max(out.halvings_used, depth);
        } else {
            out.failed_theta = theta_to;
        }
        return ok;
    }
    const double mid = 0.5 * (theta_from + theta_to);
    return advance(inst, plan, theta_from, mid, depth + 1, pair, out)
           && advance(inst, plan, mid, theta_to, depth + 1, pair, out);
}

} // namespace detail

/// `instance` supplies grid, initial state and target; its own field is ignored
/// in favour of the plan's field0 / field1.
inline ContinuationResult continuation_solve(const ProblemInstance& instance, const OperatorPair& pair0,
                                             const ContinuationPlan& plan)
{
    const int k_steps = plan.steps();
    ContinuationResult out;
    const UnitaryMatrix anchor_final = phi(pair0.h0, pair0.mu, instance.with_field(plan.field0));
    out.anchor_residual = (anchor_final.matrix() - instance.u_target.matrix()).norm();
    if (!(out.anchor_residual <= plan.anchor_factor * plan.inner.residual_tol))
        throw AnchorError("continuation_solve: anchor pair does not reach the target under field0", out.anchor_residual);

    OperatorPair pair = pair0;
    for (int k = 1; k <= k_steps; ++k) {
        const double theta_from = static_cast<double>(k - 1) / k_steps;
        const double theta = k == k_steps ? 1.0 : static_cast<double>(k) / k_steps;
        if (!detail::advance(instance, plan, theta_from, theta, 0, pair, out)) {
            out.final_pair = pair;
            return out;
        }
    }
    out.converged = true;
    out.final_pair = pair;
    return out;
}

} // namespace opident
