#pragma once

// The two-scale remainder z = u - u0 - sum_j phi_j nabla_j u0, its
// divergence-form decomposition, the scaled norms, and the exhaustive check
// of the vertical-derivative identities on tiny tori.

#include <string>
#include <vector>

#include "homlab/corrector.hpp"
#include "homlab/elliptic.hpp"
#include "homlab/ensemble.hpp"
#include "homlab/lattice.hpp"

namespace homlab {

ScalarField assemble_z(const ScalarField& u, const ScalarField& u0, const CorrectorSet& correctors);

/// nabla* a nabla z = nabla* g + r1 + r2 (exact when u, u0, phi are exact).
struct Decomposition {
    VectorField g;   // g_i = -sum_j a^{ii} phi_j(. + e_i) nabla_i nabla_j u0
    ScalarField r1;  // (a_hom,L - a_hom) : H
    ScalarField r2;  // (b - a_hom,L) : H
    MatrixField b;
    MatrixField hessian;  // H = -nabla*_i nabla_j u0
};

/// `a_hom` is the matrix u0 was solved with; `a_hom_L` enters r1 and r2.
Decomposition decomposition(const CoefficientField& a, const CorrectorSet& correctors, const ScalarField& u0,
                            const Matrix& a_hom, const Matrix& a_hom_L);

struct IdentityResidual {
    double raw = 0.0;        // ||nabla* a nabla z - (nabla* g + r1 + r2)||_2
    double corrected = 0.0;  // same after subtracting the solver residual terms
    double reference = 0.0;  // ||f||_2
    double relative() const { return reference > 0.0 ? corrected / reference : corrected; }
};

/// Residual of the decomposition for u solving with f on a and u0 with
/// a_hom. The corrected form subtracts
///   (nabla* a nabla u - f) - (nabla* a_hom nabla u0 - f) - sum_j rho_j nabla_j u0,
/// rho_j = nabla* a (nabla phi_j + e_j), which vanish for exact solves.
IdentityResidual decomposition_residual(const CoefficientField& a, const ScalarField& f, const ScalarField& u,
                                        const ScalarField& u0, const Matrix& a_hom,
                                        const CorrectorSet& correctors, const Decomposition& dec);

struct NormSet {
    double sum_sq = 0.0;       // sum z^2
    double grad_sum_sq = 0.0;  // sum |nabla z|^2
    double lattice = 0.0;      // sum (z^2 + L^2 |nabla z|^2)
    double eps_l2 = 0.0;       // (L^-d sum z^2)^1/2
    double eps_h1 = 0.0;       // (L^-d sum (z^2 + L^2 |nabla z|^2))^1/2
};

NormSet norms(const ScalarField& z);

/// eps-scaled L2 norm of u - u0.
double homogenization_error(const ScalarField& u, const ScalarField& u0);

struct IdentityCheck {
    std::string name;
    double max_discrepancy = 0.0;
    double threshold = 0.0;
    bool passed = false;
};

struct IdentityReport {
    int dim = 0;
    int side = 0;
    std::string measure;
    std::size_t configurations = 0;
    std::vector<IdentityCheck> checks;
    bool passed() const;
};

/// Exhaustive two-sided evaluation, over every configuration and every
/// (x, y, j), of the vertical-derivative identities for phi, nabla phi, u,
/// b and z, the i.i.d. commutator rule and moment bound, the martingale /
/// covariance / spectral-gap report for a few random variables, and
/// E[r2(x)] = 0. The solver tolerance in `cfg` should be tight (1e-13).
IdentityReport verify_vertical_identities(const SingleSiteMeasure& beta, const TorusGrid& grid,
                                          const SolverConfig& cfg, const RhsDescriptor& rhs,
                                          std::size_t budget = Enumeration::kDefaultBudget);

}  // namespace homlab
