#pragma once

// Solvers for nabla* a nabla u = f on the torus with mean-zero data and
// solution: an FFT solver for constant coefficients and preconditioned CG
// for diagonal random coefficients.

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "homlab/lattice.hpp"

namespace homlab {

enum class Preconditioner { None, ConstantSpectral };

struct SolverConfig {
    double tolerance = 1e-10;      // relative residual ||f - A u|| / ||f||
    std::size_t max_iterations = 0;  // 0 means 10 * N
    Preconditioner preconditioner = Preconditioner::ConstantSpectral;

    void validate() const;
    std::size_t iteration_cap(std::size_t sites) const {
        return max_iterations == 0 ? 10 * sites : max_iterations;
    }
};

struct SolveDiagnostics {
    std::size_t iterations = 0;
    double residual = 0.0;  // final relative residual, recomputed from scratch
    bool converged = true;
    double wall_seconds = 0.0;
};

struct SolveResult {
    ScalarField u;
    SolveDiagnostics diagnostics;
};

struct NotConverged : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Throws NotConverged when the diagnostics are flagged.
void require_converged(const SolveDiagnostics& diag, const std::string& what);

/// True when A is symmetric (to 1e-12 relative) and positive definite.
bool is_spd(const Matrix& A);

/// Diagonalizes nabla* A nabla in Fourier space. Works for any side L.
/// solve() is safe to call concurrently on one instance.
class SpectralSolver {
public:
    SpectralSolver(const TorusGrid& grid, const Matrix& A);
    ~SpectralSolver();
    SpectralSolver(const SpectralSolver&) = delete;
    SpectralSolver& operator=(const SpectralSolver&) = delete;

    const TorusGrid& grid() const noexcept { return grid_; }

    /// Writes the mean-zero solution for the mean-zero part of f.
    void solve(std::span<const double> f, std::span<double> u) const;
    ScalarField solve(const ScalarField& f) const;

private:
    struct Plans;
    TorusGrid grid_;
    std::size_t spectral_size_ = 0;
    std::vector<double> inv_symbol_;  // 0 on the zero mode
    std::unique_ptr<Plans> plans_;
};

/// nabla* A nabla u0 = f, sum u0 = 0, by the discrete Fourier symbol.
/// Throws for a non-SPD A or an f whose sum is not negligible.
ScalarField solve_constant(const Matrix& A, const ScalarField& f);

/// CG on the mean-zero subspace for a fixed coefficient field; the
/// preconditioner is built once and reused for every right-hand side.
class VariableSolver {
public:
    VariableSolver(const CoefficientField& a, const SolverConfig& cfg = {});
    ~VariableSolver();

    const CoefficientField& field() const noexcept { return a_; }
    const SolverConfig& config() const noexcept { return cfg_; }

    /// Non-convergence is reported in the diagnostics, not thrown.
    SolveResult solve(const ScalarField& f) const;

private:
    CoefficientField a_;
    SolverConfig cfg_;
    std::unique_ptr<SpectralSolver> precond_;
};

SolveResult solve_variable(const CoefficientField& a, const ScalarField& f, const SolverConfig& cfg = {});

// -- right-hand sides ---------------------------------------------------------

/// amplitude * cos or sin of 2 pi k . x for an integer frequency vector k.
struct TrigTerm {
    double amplitude = 1.0;
    bool sine = false;
    std::vector<int> k;
};

/// A trigonometric polynomial on the unit torus.
struct RhsDescriptor {
    std::vector<TrigTerm> terms;
    double constant = 0.0;

    /// "default" (cos 2 pi x1, plus sin 4 pi x2 if d >= 2), "cos-x1", "one".
    static RhsDescriptor named(const std::string& name, int dim);
    double evaluate(std::span<const double> x) const;
    std::string describe() const;
};

/// Pointwise evaluation at x / L followed by removal of the mean.
ScalarField discretize_rhs(const RhsDescriptor& f, const TorusGrid& grid);

}  // namespace homlab
