#pragma once

// Laser fields: analytic sinusoid sums and grid-bound sample arrays, their
// sampling on the uniform time grid, the centered field integrals
//   epsilon_hat(dl) = int_0^T eps(t) exp(i dl (t - T/2)) dt
// and convex interpolation between two fields.

#include <cmath>
#include <complex>
#include <string>
#include <variant>
#include <vector>

#include "opident/errors.hpp"
#include "opident/linalg.hpp"
#include "opident/tolerances.hpp"

namespace opident {

/// Uniform grid t_n = n * dt on [0, T] with N_T steps.
class TimeGrid
{
public:
    TimeGrid(double final_time, Index steps) : final_time_(final_time), steps_(steps)
    {
        if (!(final_time > 0.0) || !std::isfinite(final_time))
            throw ArgumentError("TimeGrid: final time must be positive");
        if (steps < 1) throw ArgumentError("TimeGrid: need at least one step");
    }

    double final_time() const { return final_time_; }
    Index steps() const { return steps_; }
    double dt() const { return final_time_ / static_cast<double>(steps_); }
    double time(Index n) const { return static_cast<double>(n) * dt(); }

    bool operator==(const TimeGrid& other) const
    {
        return steps_ == other.steps_
               && std::abs(final_time_ - other.final_time_) <= 1e-14 * final_time_;
    }

private:
    double final_time_;
    Index steps_;
};

/// Where step n reads the field. kLeft uses eps(n dt); kMidpoint uses
/// eps((n + 1/2) dt), which makes the Crank-Nicolson step the implicit
/// midpoint rule and second order in the field term.
enum class FieldSampling { kLeft, kMidpoint };

enum class Wave { kSin, kCos };

struct SinusoidTerm
{
    double amplitude = 1.0;
    double omega = 1.0;
    double phase = 0.0;
    Wave wave = Wave::kSin;

    double operator()(double t) const
    {
        const double arg = omega * t + phase;
        return amplitude * (wave == Wave::kSin ? std::sin(arg) : std::cos(arg));
    }
};

struct SinusoidSum
{
    std::vector<SinusoidTerm> terms;

    double operator()(double t) const
    {
        double v = 0.0;
        for (const auto& term : terms) v += term(t);
        return v;
    }
};

/// One value per time step, bound to the grid it was sampled on.
struct SampledField
{
    std::vector<double> values;
    TimeGrid grid;

    SampledField(std::vector<double> v, TimeGrid g) : values(std::move(v)), grid(g)
    {
        if (static_cast<Index>(values.size()) != grid.steps())
            throw ArgumentError("SampledField: expected " + std::to_string(grid.steps())
                                + " values, got " + std::to_string(values.size()));
    }
};

class LaserField
{
public:
    LaserField(SinusoidSum s) : repr_(std::move(s)) {}
    LaserField(SampledField s) : repr_(std::move(s)) {}

    static LaserField sinusoid(double amplitude, double omega, Wave wave, double phase = 0.0)
    {
        return SinusoidSum{{SinusoidTerm{amplitude, omega, phase, wave}}};
    }
    static LaserField zero() { return SinusoidSum{}; }

    bool is_sinusoid_sum() const { return std::holds_alternative<SinusoidSum>(repr_); }
    const SinusoidSum& sinusoid_sum() const { return std::get<SinusoidSum>(repr_); }
    const SampledField& sampled() const { return std::get<SampledField>(repr_); }

    /// Pointwise value; sampled fields are held constant over each step.
    double operator()(double t) const
    {
        if (is_sinusoid_sum()) return sinusoid_sum()(t);
        const auto& s = sampled();
        auto n = static_cast<Index>(std::floor(t / s.grid.dt()));
        n = std::clamp<Index>(n, 0, s.grid.steps() - 1);
        return s.values[static_cast<std::size_t>(n)];
    }

private:
    std::variant<SinusoidSum, SampledField> repr_;
};

/// Named fields used by the experiments: "sin" (sin t), "cos3" (cos 3t),
/// "two-tone" (sin t + 0.3 sin 0.37t) and "zero".
inline LaserField field_preset(const std::string& name)
{
    if (name == "sin") return LaserField::sinusoid(1.0, 1.0, Wave::kSin);
    if (name == "cos3") return LaserField::sinusoid(1.0, 3.0, Wave::kCos);
    if (name == "two-tone")
        return SinusoidSum{{SinusoidTerm{1.0, 1.0, 0.0, Wave::kSin}, SinusoidTerm{0.3, 0.37, 0.0, Wave::kSin}}};
    if (name == "zero") return LaserField::zero();
    throw ArgumentError("unknown field preset '" + name + "'");
}

/// eps_n for n = 0..N_T-1. A sampled field returns its own values and refuses
/// a grid it was not sampled on.
inline std::vector<double> sample(const LaserField& field, const TimeGrid& grid,
                                  FieldSampling where = FieldSampling::kLeft)
{
    if (!field.is_sinusoid_sum()) {
        const auto& s = field.sampled();
        if (!(s.grid == grid))
            throw ArgumentError("sample: sampled field is bound to a different grid; resampling refused");
        return s.values;
    }
    const double shift = where == FieldSampling::kMidpoint ? 0.5 : 0.0;
    std::vector<double> out(static_cast<std::size_t>(grid.steps()));
    for (Index n = 0; n < grid.steps(); ++n)
        out[static_cast<std::size_t>(n)] = field.sinusoid_sum()((static_cast<double>(n) + shift) * grid.dt());
    return out;
}

enum class IntegralMode { kAuto, kExact, kQuadrature };

namespace detail {

inline double sinc(double x, double tol)
{
    return std::abs(x) < tol ? 1.0 : std::sin(x) / x;
}

// Closed form. With sin/cos split into exp(+-i(w t + phi)), each exponential
// integrates to T exp(+-i(phi + wT/2)) sinc((dl +- w) T / 2) after centering.
inline Complex epsilon_hat_exact(const SinusoidSum& field, double dl, double T, double tol)
{
    Complex total{0.0, 0.0};
    for (const auto& term : field.terms) {
        for (int s : {+1, -1}) {
            const Complex coeff = term.wave == Wave::kSin ? Complex{0.0, -0.5 * s} : Complex{0.5, 0.0};
            const double kappa = dl + s * term.omega;
            // sinc argument vanishes at resonance; the limit T is taken there.
            const double envelope = std::abs(kappa) < tol ? T : T * sinc(0.5 * kappa * T, 0.0);
            total += term.amplitude * coeff * std::exp(kI * (s * (term.phase + 0.5 * term.omega * T))) * envelope;
        }
    }
    return total;
}

inline Complex epsilon_hat_trapezoid(const LaserField& field, double dl, const TimeGrid& grid, int refinement)
{
    const double T = grid.final_time();
    const Index m = grid.steps() * refinement;
    const double h = T / static_cast<double>(m);
    auto f = [&](Index k) {
        const double t = static_cast<double>(k) * h;
        return field(t) * std::exp(kI * (dl * (t - 0.5 * T)));
    };
    Complex sum = 0.5 * (f(0) + f(m));
    for (Index k = 1; k < m; ++k) sum += f(k);
    return h * sum;
}

// Zero-order hold: eps_n over [t_n, t_n+1), integrated exactly per cell.
inline Complex epsilon_hat_held(const SampledField& field, double dl, double tol)
{
    const double T = field.grid.final_time();
    const double dt = field.grid.dt();
    const double cell = dt * sinc(0.5 * dl * dt, tol);
    Complex sum{0.0, 0.0};
    for (Index n = 0; n < field.grid.steps(); ++n) {
        const double mid = (static_cast<double>(n) + 0.5) * dt;
        sum += field.values[static_cast<std::size_t>(n)] * std::exp(kI * (dl * (mid - 0.5 * T)));
    }
    return cell * sum;
}

} // namespace detail

/// int_0^T eps(t) exp(i dl (t - T/2)) dt.
///
/// kExact needs a sinusoid sum and uses the closed form (resonant terms
/// |dl -+ omega| < tol.resonance take their limit). kQuadrature applies the
/// composite trapezoid rule on the grid refined `refinement` times. kAuto picks
/// kExact for sinusoid sums; sampled fields are integrated exactly as a
/// piecewise-constant signal.
inline Complex epsilon_hat(const LaserField& field, double dl, const TimeGrid& grid,
                           IntegralMode mode = IntegralMode::kAuto, int refinement = 16,
                           const Tolerances& tol = kDefaultTolerances)
{
    if (refinement < 1) throw ArgumentError("epsilon_hat: refinement must be >= 1");
    if (mode == IntegralMode::kExact && !field.is_sinusoid_sum())
        throw ArgumentError("epsilon_hat: exact mode requires a sinusoid-sum field");
    if (!field.is_sinusoid_sum()) {
        if (!(field.sampled().grid == grid))
            throw ArgumentError("epsilon_hat: sampled field is bound to a different grid");
        return detail::epsilon_hat_held(field.sampled(), dl, tol.resonance);
    }
    if (mode == IntegralMode::kQuadrature) return detail::epsilon_hat_trapezoid(field, dl, grid, refinement);
    return detail::epsilon_hat_exact(field.sinusoid_sum(), dl, grid.final_time(), tol.resonance);
}

/// ||eps||_{L1(0,T)}: trapezoid on a 16x refinement, or exact for sampled fields.
inline double l1_norm(const LaserField& field, const TimeGrid& grid)
{
    if (!field.is_sinusoid_sum()) {
        double s = 0.0;
        for (double v : sample(field, grid)) s += std::abs(v);
        return s * grid.dt();
    }
    const Index m = grid.steps() * 16;
    const double h = grid.final_time() / static_cast<double>(m);
    double s = 0.5 * (std::abs(field(0.0)) + std::abs(field(grid.final_time())));
    for (Index k = 1; k < m; ++k) s += std::abs(field(static_cast<double>(k) * h));
    return s * h;
}

/// Sampled field with entries (1 - theta) eps0_n + theta eps1_n.
inline LaserField interpolate(const LaserField& field0, const LaserField& field1, double theta,
                              const TimeGrid& grid, FieldSampling where = FieldSampling::kLeft)
{
    if (!(theta >= 0.0 && theta <= 1.0)) throw ArgumentError("interpolate: theta must lie in [0, 1]");
    const auto a = sample(field0, grid, where);
    const auto b = sample(field1, grid, where);
    std::vector<double> out(a.size());
    for (std::size_t n = 0; n < a.size(); ++n) out[n] = (1.0 - theta) * a[n] + theta * b[n];
    return SampledField(std::move(out), grid);
}

} // namespace opident
