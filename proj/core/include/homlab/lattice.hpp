#pragma once

// Torus geometry and exact discrete calculus on (Z/LZ)^d.
//
// Sites are addressed by a linear index in [0, L^d), row-major with the first
// coordinate running fastest. Fields store their per-site components
// contiguously in linear-index order.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace homlab {

using Matrix = Eigen::MatrixXd;
using Coord = std::vector<int>;

class TorusGrid {
public:
    TorusGrid(int dim, int side);

    int dim() const noexcept { return dim_; }
    int side() const noexcept { return side_; }
    std::size_t size() const noexcept { return size_; }
    std::size_t stride(int direction) const { return strides_[direction]; }

    /// Componentwise representative of x in [0, L)^d.
    Coord mod_rep(std::span<const long> x) const;

    std::size_t index(std::span<const int> site) const;
    std::size_t index_of(std::span<const long> x) const;
    Coord coords(std::size_t idx) const;

    /// Linear index of x + e_i (forward) or x - e_i (backward), periodic.
    std::size_t forward(std::size_t idx, int direction) const {
        return fwd_[idx * static_cast<std::size_t>(dim_) + direction];
    }
    std::size_t backward(std::size_t idx, int direction) const {
        return bwd_[idx * static_cast<std::size_t>(dim_) + direction];
    }
    /// Linear index of x + y on the torus.
    std::size_t translate(std::size_t x, std::size_t y) const;
    /// Linear index of x - y on the torus.
    std::size_t difference(std::size_t x, std::size_t y) const;

    /// Euclidean length of the minimum-image difference x - y.
    double torus_dist(std::size_t x, std::size_t y) const;

    bool operator==(const TorusGrid& other) const noexcept {
        return dim_ == other.dim_ && side_ == other.side_;
    }

private:
    int dim_;
    int side_;
    std::size_t size_;
    std::vector<std::size_t> strides_;
    // Neighbour tables are immutable and shared between copies of the grid.
    std::shared_ptr<const std::vector<std::size_t>> fwd_table_;
    std::shared_ptr<const std::vector<std::size_t>> bwd_table_;
    const std::size_t* fwd_ = nullptr;
    const std::size_t* bwd_ = nullptr;
};

struct ScalarField {
    TorusGrid grid;
    std::vector<double> values;

    explicit ScalarField(const TorusGrid& g, double fill = 0.0)
        : grid(g), values(g.size(), fill) {}
    ScalarField(const TorusGrid& g, std::vector<double> v);

    double& operator[](std::size_t x) { return values[x]; }
    double operator[](std::size_t x) const { return values[x]; }
    std::size_t size() const noexcept { return values.size(); }
};

struct VectorField {
    TorusGrid grid;
    std::vector<double> values;  // N * d, component fastest

    explicit VectorField(const TorusGrid& g, double fill = 0.0)
        : grid(g), values(g.size() * static_cast<std::size_t>(g.dim()), fill) {}

    double& operator()(std::size_t x, int i) {
        return values[x * static_cast<std::size_t>(grid.dim()) + i];
    }
    double operator()(std::size_t x, int i) const {
        return values[x * static_cast<std::size_t>(grid.dim()) + i];
    }
};

struct MatrixField {
    TorusGrid grid;
    std::vector<double> values;  // N * d * d, (i, j) row-major per site

    explicit MatrixField(const TorusGrid& g, double fill = 0.0)
        : grid(g),
          values(g.size() * static_cast<std::size_t>(g.dim() * g.dim()), fill) {}

    double& operator()(std::size_t x, int i, int j) {
        const auto d = static_cast<std::size_t>(grid.dim());
        return values[(x * d + i) * d + j];
    }
    double operator()(std::size_t x, int i, int j) const {
        const auto d = static_cast<std::size_t>(grid.dim());
        return values[(x * d + i) * d + j];
    }
};

/// Diagonal conductivities a^{ii}(x), stored like a VectorField.
struct CoefficientField {
    TorusGrid grid;
    std::vector<double> diag;  // N * d

    explicit CoefficientField(const TorusGrid& g, double fill = 1.0)
        : grid(g), diag(g.size() * static_cast<std::size_t>(g.dim()), fill) {}

    double& operator()(std::size_t x, int i) {
        return diag[x * static_cast<std::size_t>(grid.dim()) + i];
    }
    double operator()(std::size_t x, int i) const {
        return diag[x * static_cast<std::size_t>(grid.dim()) + i];
    }

    /// Spatial arithmetic mean per direction.
    std::vector<double> arithmetic_mean() const;
    /// Spatial harmonic mean per direction.
    std::vector<double> harmonic_mean() const;
    double min_entry() const;
    double max_entry() const;

    /// The field a(. + y).
    CoefficientField shifted(std::size_t y) const;
};

// -- discrete calculus ------------------------------------------------------

/// nabla_i v(x) = v(x + e_i) - v(x)
ScalarField forward_diff(const ScalarField& v, int direction);
/// nabla*_i v(x) = v(x - e_i) - v(x)
ScalarField backward_diff(const ScalarField& v, int direction);
VectorField forward_diff(const ScalarField& v);
/// nabla* g = sum_i nabla*_i g_i
ScalarField backward_diff_div(const VectorField& g);

/// nabla* a nabla v for a diagonal coefficient field.
ScalarField apply_operator(const CoefficientField& a, const ScalarField& v);
/// nabla* A nabla v = sum_ij nabla*_i (A_ij nabla_j v) for a constant matrix.
ScalarField apply_constant(const Matrix& A, const ScalarField& v);

/// Discrete Hessian with entries -nabla*_i nabla_j v.
MatrixField hessian(const ScalarField& v);
/// Entries nabla_i nabla_j v (forward-forward second differences).
MatrixField forward_hessian(const ScalarField& v);

double spatial_mean(const ScalarField& v);
ScalarField mean_zero(const ScalarField& v);
void project_mean_zero(std::span<double> v);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double max_abs(std::span<const double> a);
/// Frobenius-type sum of squares over all components.
double sum_squares(std::span<const double> a);

/// A : M pointwise, for constant A.
ScalarField contract(const Matrix& A, const MatrixField& M);
/// B(x) : M(x) pointwise.
ScalarField contract(const MatrixField& B, const MatrixField& M);

/// Unit mass at y.
ScalarField delta(const TorusGrid& g, std::size_t y);

}  // namespace homlab
