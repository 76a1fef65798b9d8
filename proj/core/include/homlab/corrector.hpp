#pragma once

// Periodic correctors, the homogenized proxy a_hom,L, the flux matrix b and
// corrector moment statistics.

#include <cstddef>
#include <optional>
#include <vector>

#include "homlab/elliptic.hpp"
#include "homlab/ensemble.hpp"
#include "homlab/lattice.hpp"
#include "homlab/stats.hpp"

namespace homlab {

struct CorrectorSet {
    TorusGrid grid;
    std::vector<ScalarField> phi;         // phi_j, mean zero
    std::vector<VectorField> grad;        // nabla phi_j
    std::vector<SolveDiagnostics> diagnostics;

    bool converged() const;
};

/// Solves nabla* a nabla phi_j = -nabla* (a e_j) for j = 1..d.
CorrectorSet solve_correctors(const VariableSolver& solver);
CorrectorSet solve_correctors(const CoefficientField& a, const SolverConfig& cfg = {});

struct HomogenizedEstimate {
    Matrix raw;        // columns L^-d sum_x a (nabla phi_j + e_j)
    Matrix symmetric;  // (raw + raw^T) / 2
    double asymmetry = 0.0;  // max |raw - raw^T|
};

HomogenizedEstimate ahom_L(const CoefficientField& a, const CorrectorSet& correctors);

struct EnsembleHomogenized {
    Matrix mean;
    Matrix se;  // zero for exhaustive plans
    std::size_t count = 0;
    bool exhaustive = false;
    double max_asymmetry = 0.0;
    std::vector<Matrix> samples;  // per realization (MC only)
};

EnsembleHomogenized ahom_L_ensemble(const SingleSiteMeasure& beta, const TorusGrid& grid,
                                    const SamplingPlan& plan, const SolverConfig& cfg = {});

/// b^{ij}(x) = a^{ii}(x - e_i) (nabla_i phi_j(x - e_i) + delta_ij).
MatrixField b_field(const CoefficientField& a, const CorrectorSet& correctors);

/// Per-realization corrector moments, averaged over x and j.
struct CorrectorMomentSample {
    double phi2 = 0.0;   // mean of phi_j(x)^2
    double grad4 = 0.0;  // mean of |nabla phi_j(x)|^4
};

CorrectorMomentSample corrector_moment_sample(const CorrectorSet& correctors);

struct MomentRow {
    int dim = 0;
    int side = 0;
    std::size_t count = 0;
    McEstimate phi2;
    McEstimate grad4;
    std::vector<CorrectorMomentSample> samples;  // per realization (MC only)
};

/// Weighted fit of E[phi^2] against c0 + c1 ln L + c2 ln^2 L (d = 2).
struct LogGrowthFit {
    double c0 = 0.0, c1 = 0.0, c2 = 0.0;
    double se_c1 = 0.0, se_c2 = 0.0;
    /// Growth is at most logarithmic when c2 <= 2 se(c2).
    bool at_most_logarithmic = false;
};

struct MomentReport {
    std::vector<MomentRow> rows;
    std::optional<LogGrowthFit> log_fit;  // d = 2 with >= 3 sides
    /// max/min ratio of E|nabla phi|^4 over the sides.
    double grad4_spread = 0.0;
    /// E[phi^2] at the largest side over the next largest.
    double phi2_last_ratio = 0.0;
};

MomentRow corrector_moments(const SingleSiteMeasure& beta, const TorusGrid& grid, const SamplingPlan& plan,
                            const SolverConfig& cfg = {});
/// Sides use independent streams seeded with side_seed(plan.seed, L).
MomentReport corrector_moments(const SingleSiteMeasure& beta, int dim, const std::vector<int>& sides,
                               const SamplingPlan& plan, const SolverConfig& cfg = {});

LogGrowthFit fit_log_growth(const std::vector<MomentRow>& rows);

}  // namespace homlab
