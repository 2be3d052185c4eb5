#include <gtest/gtest.h>

#include <cmath>

#include "opident/experiments.hpp"
#include "opident/newton.hpp"

using namespace opident;

namespace {

ComplexMatrix diag2(Complex a, Complex b)
{
    ComplexMatrix m = ComplexMatrix::Zero(2, 2);
    m(0, 0) = a;
    m(1, 1) = b;
    return m;
}

OperatorPair start_near(const OperatorPair& truth, double rho, std::uint64_t seed)
{
    Rng rng(perturbation_seed(seed));
    return perturbed_pair(truth, rho, rng);
}

} // namespace

TEST(Packing, UnknownsRoundTrip)
{
    Rng rng(1);
    for (Index n = 1; n <= 6; ++n) {
        const auto pair = random_pair(rng, n);
        const RealVector x = pack_unknowns(pair.h0, pair.mu);
        ASSERT_EQ(x.size(), n * n);
        const OperatorPair back = unpack_unknowns(x, n);
        EXPECT_EQ(back.h0.matrix(), pair.h0.matrix());
        EXPECT_EQ(back.mu.matrix(), pair.mu.matrix());
    }
}

TEST(Packing, UnknownOrderIsRowMajorUpperTriangle)
{
    RealVector x(4);
    x << 1, 2, 3, 4;
    const OperatorPair p = unpack_unknowns(x, 2);
    EXPECT_EQ(p.h0(0, 0), 1.0);
    EXPECT_EQ(p.h0(0, 1), 2.0);
    EXPECT_EQ(p.h0(1, 1), 3.0);
    EXPECT_EQ(p.mu(0, 1), 4.0);
    EXPECT_EQ(p.mu(0, 0), 0.0);
}

TEST(Packing, EquationsRoundTrip)
{
    Rng rng(2);
    const HermitianMatrix s = random_hermitian(rng, 4);
    const RealVector b = pack_equations(s.matrix());
    ASSERT_EQ(b.size(), 16);
    EXPECT_EQ(b(0), s(0, 1).real());
    EXPECT_EQ(b(1), s(0, 1).imag());
    EXPECT_EQ(b(12), s(0, 0).real());
    EXPECT_EQ(unpack_equations(b, 4).matrix(), s.matrix());
}

TEST(Packing, WrongLengths)
{
    EXPECT_THROW(unpack_unknowns(RealVector::Zero(5), 2), DimensionError);
    EXPECT_THROW(unpack_equations(RealVector::Zero(3), 2), DimensionError);
}

TEST(ResidualTarget, ZeroAtTarget)
{
    Rng rng(3);
    const UnitaryMatrix u = random_unitary(rng, 4);
    for (auto kind : {ResidualKind::kLog, ResidualKind::kSkew})
        EXPECT_LE(residual_target(u, u, kind).matrix().norm(), 1e-14);
}

TEST(ResidualTarget, DiagonalPhases)
{
    const double alpha = 0.3;
    const UnitaryMatrix w(diag2(std::exp(kI * alpha), std::exp(-kI * alpha)));
    const UnitaryMatrix id = UnitaryMatrix::identity(2);
    const HermitianMatrix slog = residual_target(id, w, ResidualKind::kLog);
    const HermitianMatrix sskew = residual_target(id, w, ResidualKind::kSkew);
    EXPECT_NEAR(slog(0, 0).real(), -0.3, 1e-15);
    EXPECT_NEAR(slog(1, 1).real(), 0.3, 1e-15);
    EXPECT_NEAR(sskew(0, 0).real(), -std::sin(0.3), 1e-15);
    EXPECT_NEAR(sskew(1, 1).real(), 0.29552020666133955, 1e-15);
}

TEST(ResidualTarget, KindsAgreeToSecondOrder)
{
    Rng rng(4);
    const UnitaryMatrix u = random_unitary(rng, 5);
    const HermitianMatrix h = random_hermitian(rng, 5);
    const UnitaryMatrix step = exp_minus_i(h, 1.0);
    const double scale = 1e-3 / (step.matrix() - ComplexMatrix::Identity(5, 5)).norm();
    const UnitaryMatrix w = exp_minus_i(h, scale);
    ASSERT_NEAR((w.matrix() - ComplexMatrix::Identity(5, 5)).norm(), 1e-3, 1e-4);
    const UnitaryMatrix target(u.matrix() * w.matrix());
    const double diff = (residual_target(u, target, ResidualKind::kLog).matrix()
                         - residual_target(u, target, ResidualKind::kSkew).matrix())
                            .norm();
    EXPECT_LE(diff, 1e-6);
}

TEST(ResidualTarget, RawRightHandSideIsNotHermitian)
{
    Rng rng(5);
    const UnitaryMatrix u = random_unitary(rng, 3);
    const UnitaryMatrix v = random_unitary(rng, 3);
    EXPECT_GT(raw_rhs_antihermitian_defect(u, v), 1e-3);
    EXPECT_LE(raw_rhs_antihermitian_defect(u, u), 1e-14);
}

TEST(Assemble, SingleStepFromIdentity)
{
    const double dt = 0.5, c = 1.5;
    const TimeGrid grid(dt, 1);
    const ProblemInstance inst(grid, SampledField({c}, grid), UnitaryMatrix::identity(3), UnitaryMatrix::identity(3));
    const RealMatrix a = assemble_system(propagate(RealSymmetric::zero(3), RealSymmetricZeroDiag::zero(3), inst));
    // Columns: h00 h01 h02 h11 h12 h22 | m01 m02 m12.
    // Rows:    Re01 Im01 Re02 Im02 Re12 Im12 | d0 d1 d2.
    RealMatrix expected = RealMatrix::Zero(9, 9);
    expected(6, 0) = dt;
    expected(0, 1) = dt;
    expected(2, 2) = dt;
    expected(7, 3) = dt;
    expected(4, 4) = dt;
    expected(8, 5) = dt;
    expected(0, 6) = c * dt;
    expected(2, 7) = c * dt;
    expected(4, 8) = c * dt;
    EXPECT_EQ(a, expected);
}

TEST(Assemble, ZeroFieldDropsDipoleColumns)
{
    Rng rng(6);
    const auto pair = random_pair(rng, 3);
    const ProblemInstance inst(TimeGrid(5.0, 20), LaserField::zero(), UnitaryMatrix::identity(3),
                               UnitaryMatrix::identity(3));
    const RealMatrix a = assemble_system(propagate(pair.h0, pair.mu, inst));
    EXPECT_EQ(a.rightCols(3).cwiseAbs().maxCoeff(), 0.0);
    Eigen::FullPivLU<RealMatrix> lu(a);
    EXPECT_LE(lu.rank(), 6);
}

TEST(Assemble, MatchesMatrixFreeApplication)
{
    Rng rng(7);
    const auto pair = random_pair(rng, 3);
    const UnitaryMatrix init = random_unitary(rng, 3);
    const ProblemInstance inst(TimeGrid(8.0, 40), field_preset("two-tone"), init, init);
    const Trajectory traj = propagate(pair.h0, pair.mu, inst);
    const RealMatrix a = assemble_system(traj);
    for (int trial = 0; trial < 20; ++trial) {
        const RealVector x = RealSymmetric::symmetrized(rng.uniform_matrix(3, 3)).matrix().reshaped(9, 1);
        const OperatorPair d = unpack_unknowns(x, 3);
        const RealVector direct = pack_equations(linearized_sum(traj, d.h0, d.mu));
        EXPECT_LE((a * x - direct).norm(), 1e-12);
    }
}

TEST(Assemble, KroneckerRouteAgrees)
{
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const GeneratedProblem p = generate_problem(seed);
        const Trajectory traj = propagate(p.truth.h0, p.truth.mu, p.instance);
        const RealMatrix a = assemble_system(traj);
        EXPECT_LE((a - assemble_system_kron(traj)).norm(), 1e-12 * a.norm());
    }
}

TEST(Assemble, LinearizedSumIsHermitian)
{
    const GeneratedProblem p = generate_problem(8);
    const Trajectory traj = propagate(p.truth.h0, p.truth.mu, p.instance);
    Rng rng(8);
    const ComplexMatrix s = linearized_sum(traj, random_symmetric(rng, 5), random_zero_diag(rng, 5));
    EXPECT_LE((s - s.adjoint()).norm(), 1e-12);
}

TEST(NewtonSolve, StartAtTruth)
{
    const GeneratedProblem p = generate_problem(0);
    const SolveReport r = newton_solve(p.instance, p.truth, {}, p.truth);
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(r.steps(), 0);
    EXPECT_LE(r.final_residual(), 1e-13);
    ASSERT_EQ(r.iterations.size(), 1u);
    EXPECT_EQ(*r.iterations[0].error_h0, 0.0);
}

TEST(NewtonSolve, ConvergesQuadraticallyFromSmallPerturbation)
{
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const GeneratedProblem p = generate_problem(seed);
        const SolveReport r = newton_solve(p.instance, start_near(p.truth, 2e-4, seed), {}, p.truth);
        ASSERT_TRUE(r.converged) << "seed " << seed << ": " << r.diagnosis;
        EXPECT_LE(r.steps(), 8);
        EXPECT_LE(*r.iterations.back().error_h0, 1e-11);
        EXPECT_LE(*r.iterations.back().error_mu, 1e-11);
        std::vector<double> errs;
        for (const auto& it : r.iterations) errs.push_back(*it.error_h0 + *it.error_mu);
        const auto order = convergence_order(errs, 1e-11);
        ASSERT_TRUE(order.has_value());
        EXPECT_GE(*order, 1.7) << "seed " << seed;
        EXPECT_EQ(r.final_pair.mu.matrix().diagonal().cwiseAbs().maxCoeff(), 0.0);
    }
}

TEST(NewtonSolve, QuadraticModelConstantIsStable)
{
    // e1 / e0^2 settles to a constant as the perturbation shrinks.
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const GeneratedProblem p = generate_problem(seed);
        Rng rng(perturbation_seed(seed));
        const RealSymmetric dh = random_symmetric(rng, 5);
        const RealSymmetricZeroDiag dm = random_zero_diag(rng, 5);
        std::vector<double> constants;
        for (double h : {1e-4, 1e-5, 1e-6}) {
            const OperatorPair init{p.truth.h0 + h * dh, p.truth.mu + h * dm};
            NewtonOptions o;
            o.max_iters = 1;
            const SolveReport r = newton_solve(p.instance, init, o, p.truth);
            const double e0 = std::hypot(*r.iterations[0].error_h0, *r.iterations[0].error_mu);
            const double e1 = std::hypot(*r.iterations[1].error_h0, *r.iterations[1].error_mu);
            constants.push_back(e1 / (e0 * e0));
        }
        EXPECT_NEAR(constants[2] / constants[1], 1.0, 0.1) << "seed " << seed;
    }
}

TEST(NewtonSolve, ResidualKindsReachSamePair)
{
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const GeneratedProblem p = generate_problem(seed);
        const OperatorPair init = start_near(p.truth, 1e-3, seed);
        NewtonOptions skew;
        skew.residual_kind = ResidualKind::kSkew;
        const SolveReport a = newton_solve(p.instance, init, {}, p.truth);
        const SolveReport b = newton_solve(p.instance, init, skew, p.truth);
        ASSERT_TRUE(a.converged && b.converged);
        EXPECT_LE((a.final_pair.h0.matrix() - b.final_pair.h0.matrix()).norm(), 1e-10);
        EXPECT_LE((a.final_pair.mu.matrix() - b.final_pair.mu.matrix()).norm(), 1e-10);
    }
}

TEST(NewtonSolve, ZeroFieldIsSingular)
{
    GeneratedProblem p = generate_problem(1);
    const ProblemInstance inst = p.instance.with_field(LaserField::zero());
    const SolveReport r = newton_solve(inst, start_near(p.truth, 1e-2, 1));
    EXPECT_FALSE(r.converged);
    EXPECT_EQ(r.status, SolveStatus::kSingular);
    EXPECT_NE(r.diagnosis.find("mu unknown"), std::string::npos);
    EXPECT_EQ(r.steps(), 0);
}

TEST(NewtonSolve, FarStartReportsFailureWithoutThrowing)
{
    const GeneratedProblem p = generate_problem(2);
    SolveReport r;
    ASSERT_NO_THROW(r = newton_solve(p.instance, start_near(p.truth, 10.0, 2), {}, p.truth));
    EXPECT_FALSE(r.converged);
    EXPECT_FALSE(r.diagnosis.empty());
    EXPECT_FALSE(r.iterations.empty());
}

TEST(NewtonSolve, DimensionMismatch)
{
    const GeneratedProblem p = generate_problem(0);
    const OperatorPair wrong{RealSymmetric::zero(3), RealSymmetricZeroDiag::zero(3)};
    EXPECT_THROW(newton_solve(p.instance, wrong), DimensionError);
}

TEST(FrozenNewton, StartAtTruth)
{
    const GeneratedProblem p = generate_problem(3);
    const SolveReport r = frozen_newton_solve(p.instance, p.truth, p.truth);
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(r.steps(), 0);
    EXPECT_EQ(r.solver, "frozen");
}

TEST(FrozenNewton, ConvergesLinearly)
{
    const GeneratedProblem p = generate_problem(3);
    const OperatorPair init = start_near(p.truth, 1e-3, 3);
    NewtonOptions o;
    o.max_iters = 200;
    const SolveReport frozen = frozen_newton_solve(p.instance, init, init, o, p.truth);
    const SolveReport full = newton_solve(p.instance, init, {}, p.truth);
    ASSERT_TRUE(frozen.converged) << frozen.diagnosis;
    ASSERT_TRUE(full.converged);
    EXPECT_GT(frozen.steps(), full.steps());
    std::vector<double> errs;
    for (const auto& it : frozen.iterations) errs.push_back(*it.error_h0 + *it.error_mu);
    const auto order = convergence_order(errs, 1e-11);
    ASSERT_TRUE(order.has_value());
    EXPECT_LT(*order, 1.5);
}

TEST(FrozenNewton, ZeroFieldReferenceIsSingular)
{
    const GeneratedProblem p = generate_problem(4);
    const ProblemInstance inst = p.instance.with_field(LaserField::zero());
    // The target was generated under sin t, so the truth does not solve this problem.
    const SolveReport r = frozen_newton_solve(inst, p.truth, p.truth);
    EXPECT_EQ(r.status, SolveStatus::kSingular);
    EXPECT_EQ(r.steps(), 0);
}

TEST(ConvergenceOrder, SyntheticSequences)
{
    const auto quad = convergence_order({1e-1, 1e-2, 1e-4, 1e-8});
    ASSERT_TRUE(quad.has_value());
    EXPECT_NEAR(*quad, 2.0, 1e-12);
    const auto lin = convergence_order({1e-1, 1e-2, 1e-3, 1e-4, 1e-5});
    ASSERT_TRUE(lin.has_value());
    EXPECT_NEAR(*lin, 1.0, 1e-12);
    EXPECT_FALSE(convergence_order({1e-1, 1e-20}).has_value());
}
