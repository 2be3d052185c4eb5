#pragma once

// Seeded random draws for instance generation. The engine is std::mt19937_64,
// whose output sequence is fixed by the C++ standard; doubles are formed from
// the top 53 bits directly instead of through std::uniform_real_distribution,
// whose algorithm is implementation-defined. Draws are therefore identical
// across compilers and library versions.

#include <cstdint>
#include <random>

#include "opident/linalg.hpp"

namespace opident {

class Rng
{
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1).
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Matrix with i.i.d. uniform [lo, hi) entries, filled row-major.
    RealMatrix uniform_matrix(Index rows, Index cols, double lo = -1.0, double hi = 1.0)
    {
        RealMatrix m(rows, cols);
        for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < cols; ++j) m(i, j) = uniform(lo, hi);
        return m;
    }

private:
    std::mt19937_64 engine_;
};

/// (A + A^T)/2 with A uniform in [-1, 1].
inline RealSymmetric random_symmetric(Rng& rng, Index n)
{
    return RealSymmetric::symmetrized(rng.uniform_matrix(n, n));
}

/// As random_symmetric, diagonal cleared.
inline RealSymmetricZeroDiag random_zero_diag(Rng& rng, Index n)
{
    return RealSymmetricZeroDiag::symmetrized(rng.uniform_matrix(n, n));
}

/// Hermitian matrix with real and imaginary parts drawn uniform in [-1, 1].
inline HermitianMatrix random_hermitian(Rng& rng, Index n)
{
    const RealMatrix re = rng.uniform_matrix(n, n);
    const RealMatrix im = rng.uniform_matrix(n, n);
    ComplexMatrix a(n, n);
    a.real() = re;
    a.imag() = im;
    return HermitianMatrix::hermitized(a);
}

/// exp(-iH) for a random Hermitian H, i.e. a random unitary with phases spread
/// over the circle.
inline UnitaryMatrix random_unitary(Rng& rng, Index n, double spread = 1.0)
{
    return exp_minus_i(random_hermitian(rng, n), spread);
}

} // namespace opident
