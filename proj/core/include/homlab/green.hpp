#pragma once

// Periodic Green's function of nabla* a nabla, its gradients and decay
// statistics.

#include <cstddef>
#include <vector>

#include "homlab/elliptic.hpp"
#include "homlab/ensemble.hpp"
#include "homlab/fit.hpp"
#include "homlab/lattice.hpp"

namespace homlab {

/// G(., y): nabla* a nabla G = delta_y - L^-d, sum G = 0.
struct GreenSlice {
    std::size_t source = 0;
    ScalarField values;
    SolveDiagnostics diagnostics;
};

/// delta_y - L^-d.
ScalarField green_rhs(const TorusGrid& grid, std::size_t y);

GreenSlice green_slice(const VariableSolver& solver, std::size_t y);
GreenSlice green_slice(const CoefficientField& a, std::size_t y, const SolverConfig& cfg = {});

/// nabla_x nabla_{y_k} G(x, y) = nabla_x [G(., y + e_k) - G(., y)].
VectorField mixed_second_gradient(const VariableSolver& solver, std::size_t y, int k);
VectorField mixed_second_gradient(const CoefficientField& a, std::size_t y, int k, const SolverConfig& cfg = {});

/// All d mixed gradients at y from d + 1 solves.
std::vector<VectorField> mixed_second_gradients(const VariableSolver& solver, std::size_t y);

/// G(x, y) for every source y: column y is G(., y).
struct GreenTable {
    TorusGrid grid;
    std::vector<ScalarField> columns;

    double operator()(std::size_t x, std::size_t y) const { return columns[y][x]; }
    /// nabla_{y_k} G(x, y)
    double grad_y(std::size_t x, std::size_t y, int k) const {
        return columns[grid.forward(y, k)][x] - columns[y][x];
    }
    /// nabla_{x_i} nabla_{y_k} G(x, y)
    double grad_xy(std::size_t x, int i, std::size_t y, int k) const {
        const std::size_t xi = grid.forward(x, i);
        return grad_y(xi, y, k) - grad_y(x, y, k);
    }
};

GreenTable green_table(const VariableSolver& solver);

enum class DecayKind { Annealed, Quenched, Mixed };
const char* decay_kind_name(DecayKind k);

struct DecayShell {
    long shell = 0;       // rounded distance
    double radius = 0.0;  // mean distance of the sites in the shell
    std::size_t sites = 0;
    DecayKind kind = DecayKind::Annealed;
    double value = 0.0;
    double se = 0.0;
};

struct DecayFit {
    DecayKind kind = DecayKind::Annealed;
    LineFit fit;
    double r_min = 0.0, r_max = 0.0;
    std::size_t shells = 0;
};

struct DecayReport {
    int dim = 0;
    int side = 0;
    std::size_t realizations = 0;
    std::vector<DecayShell> shells;
    DecayFit annealed;  // E[|nabla G|^4]^{1/4}
    DecayFit quenched;  // max over realizations and shell sites of |nabla G|
    DecayFit mixed;     // E[|nabla nabla G|^4]^{1/4}, Frobenius norm
    bool annealed_monotone = false;  // nonincreasing over the fit window
    double max_solver_residual = 0.0;
};

/// Shells at distance r in [2, L/4] enter the fits; the source sits at the
/// origin, which by stationarity costs nothing in generality.
DecayReport decay_stats(const SingleSiteMeasure& beta, const TorusGrid& grid, const SamplingPlan& plan,
                        const SolverConfig& cfg = {});

struct DimensionReductionReport {
    int side = 0;
    double max_discrepancy = 0.0;
    double scale = 0.0;  // max |G2|
    double tolerance = 0.0;
    double mean2 = 0.0;  // spatial mean of G2
    double mean3 = 0.0;  // spatial mean of G3
    bool passed = false;
};

/// Compares G^(2)(x, 0) with sum_{x3} G^(3)((x, x3), 0) for the lifted field
/// a3(x, x3) = diag(a2_1(x), a2_2(x), 1).
DimensionReductionReport dimension_reduction_check(const CoefficientField& a2, const SolverConfig& cfg = {});

/// The lifted three-dimensional field used above.
CoefficientField lift_to_three_dimensions(const CoefficientField& a2);

}  // namespace homlab
