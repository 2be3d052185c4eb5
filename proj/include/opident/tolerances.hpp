#pragma once

namespace opident {

// Numerical thresholds used across the library. Every check that compares
// against a fixed tolerance reads it from here.
struct Tolerances
{
    double unitarity = 1e-10;        // ||U*U - Id||_F at construction
    double hermiticity = 1e-13;      // |A_ij - conj(A_ji)| and |Im A_ii|
    double branch_cut = 1e-12;       // distance of an eigenphase from +-pi
    double eig_tie = 1e-12;          // relative gap under which eigenvalues tie
    double tangency = 1e-10;         // ||M*B + B*M||_F for tangent vectors
    double inverse_structure = 1e-10; // pre-projection defect of the local inverse
    double resonance = 1e-12;        // |delta_lambda -+ omega| switching to the limit form
};

inline constexpr Tolerances kDefaultTolerances{};

} // namespace opident
