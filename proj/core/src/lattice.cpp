#include "homlab/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace homlab {

namespace {

void require_same_grid(const TorusGrid& a, const TorusGrid& b) {
    if (!(a == b)) {
        throw std::invalid_argument("fields live on different grids");
    }
}

long wrap(long x, long L) {
    const long r = x % L;
    return r < 0 ? r + L : r;
}

}  // namespace

TorusGrid::TorusGrid(int dim, int side) : dim_(dim), side_(side), size_(1) {
    if (dim < 1) throw std::invalid_argument("torus dimension must be >= 1");
    if (side < 2) throw std::invalid_argument("torus side must be >= 2");
    strides_.resize(static_cast<std::size_t>(dim));
    for (int i = 0; i < dim; ++i) {
        strides_[i] = size_;
        size_ *= static_cast<std::size_t>(side);
    }

    auto fwd = std::make_shared<std::vector<std::size_t>>(size_ * dim);
    auto bwd = std::make_shared<std::vector<std::size_t>>(size_ * dim);
    const auto L = static_cast<std::size_t>(side);
    for (std::size_t x = 0; x < size_; ++x) {
        for (int i = 0; i < dim; ++i) {
            const std::size_t s = strides_[i];
            const std::size_t c = (x / s) % L;
            const std::size_t base = x - c * s;
            (*fwd)[x * dim + i] = base + ((c + 1) % L) * s;
            (*bwd)[x * dim + i] = base + ((c + L - 1) % L) * s;
        }
    }
    fwd_ = fwd->data();
    bwd_ = bwd->data();
    fwd_table_ = std::move(fwd);
    bwd_table_ = std::move(bwd);
}

Coord TorusGrid::mod_rep(std::span<const long> x) const {
    if (x.size() != static_cast<std::size_t>(dim_)) {
        throw std::invalid_argument("coordinate has wrong dimension");
    }
    Coord out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<int>(wrap(x[i], side_));
    return out;
}

std::size_t TorusGrid::index(std::span<const int> site) const {
    if (site.size() != static_cast<std::size_t>(dim_)) {
        throw std::invalid_argument("coordinate has wrong dimension");
    }
    std::size_t idx = 0;
    for (int i = 0; i < dim_; ++i) {
        idx += static_cast<std::size_t>(wrap(site[i], side_)) * strides_[i];
    }
    return idx;
}

std::size_t TorusGrid::index_of(std::span<const long> x) const {
    const Coord c = mod_rep(x);
    return index(c);
}

Coord TorusGrid::coords(std::size_t idx) const {
    Coord c(static_cast<std::size_t>(dim_));
    for (int i = 0; i < dim_; ++i) {
        c[i] = static_cast<int>((idx / strides_[i]) % static_cast<std::size_t>(side_));
    }
    return c;
}

std::size_t TorusGrid::translate(std::size_t x, std::size_t y) const {
    std::size_t idx = 0;
    const auto L = static_cast<std::size_t>(side_);
    for (int i = 0; i < dim_; ++i) {
        const std::size_t cx = (x / strides_[i]) % L;
        const std::size_t cy = (y / strides_[i]) % L;
        idx += ((cx + cy) % L) * strides_[i];
    }
    return idx;
}

std::size_t TorusGrid::difference(std::size_t x, std::size_t y) const {
    std::size_t idx = 0;
    const auto L = static_cast<std::size_t>(side_);
    for (int i = 0; i < dim_; ++i) {
        const std::size_t cx = (x / strides_[i]) % L;
        const std::size_t cy = (y / strides_[i]) % L;
        idx += ((cx + L - cy) % L) * strides_[i];
    }
    return idx;
}

double TorusGrid::torus_dist(std::size_t x, std::size_t y) const {
    const auto L = static_cast<long>(side_);
    double sum = 0.0;
    for (int i = 0; i < dim_; ++i) {
        const long cx = static_cast<long>((x / strides_[i]) % side_);
        const long cy = static_cast<long>((y / strides_[i]) % side_);
        long diff = wrap(cx - cy, L);
        diff = std::min(diff, L - diff);
        sum += static_cast<double>(diff * diff);
    }
    return std::sqrt(sum);
}

ScalarField::ScalarField(const TorusGrid& g, std::vector<double> v)
    : grid(g), values(std::move(v)) {
    if (values.size() != grid.size()) {
        throw std::invalid_argument("scalar field length does not match grid");
    }
}

std::vector<double> CoefficientField::arithmetic_mean() const {
    const int d = grid.dim();
    std::vector<double> m(static_cast<std::size_t>(d), 0.0);
    for (std::size_t x = 0; x < grid.size(); ++x)
        for (int i = 0; i < d; ++i) m[i] += (*this)(x, i);
    for (auto& v : m) v /= static_cast<double>(grid.size());
    return m;
}

std::vector<double> CoefficientField::harmonic_mean() const {
    const int d = grid.dim();
    std::vector<double> m(static_cast<std::size_t>(d), 0.0);
    for (std::size_t x = 0; x < grid.size(); ++x)
        for (int i = 0; i < d; ++i) m[i] += 1.0 / (*this)(x, i);
    for (auto& v : m) v = static_cast<double>(grid.size()) / v;
    return m;
}

double CoefficientField::min_entry() const { return *std::min_element(diag.begin(), diag.end()); }
double CoefficientField::max_entry() const { return *std::max_element(diag.begin(), diag.end()); }

CoefficientField CoefficientField::shifted(std::size_t y) const {
    CoefficientField out(grid);
    const int d = grid.dim();
    for (std::size_t x = 0; x < grid.size(); ++x) {
        const std::size_t src = grid.translate(x, y);
        for (int i = 0; i < d; ++i) out(x, i) = (*this)(src, i);
    }
    return out;
}

ScalarField forward_diff(const ScalarField& v, int direction) {
    const auto& g = v.grid;
    ScalarField out(g);
    for (std::size_t x = 0; x < g.size(); ++x) out[x] = v[g.forward(x, direction)] - v[x];
    return out;
}

ScalarField backward_diff(const ScalarField& v, int direction) {
    const auto& g = v.grid;
    ScalarField out(g);
    for (std::size_t x = 0; x < g.size(); ++x) out[x] = v[g.backward(x, direction)] - v[x];
    return out;
}

VectorField forward_diff(const ScalarField& v) {
    const auto& g = v.grid;
    VectorField out(g);
    for (std::size_t x = 0; x < g.size(); ++x)
        for (int i = 0; i < g.dim(); ++i) out(x, i) = v[g.forward(x, i)] - v[x];
    return out;
}

ScalarField backward_diff_div(const VectorField& gfield) {
    const auto& g = gfield.grid;
    ScalarField out(g);
    for (std::size_t x = 0; x < g.size(); ++x) {
        double s = 0.0;
        for (int i = 0; i < g.dim(); ++i) s += gfield(g.backward(x, i), i) - gfield(x, i);
        out[x] = s;
    }
    return out;
}

ScalarField apply_operator(const CoefficientField& a, const ScalarField& v) {
    require_same_grid(a.grid, v.grid);
    const auto& g = v.grid;
    const int d = g.dim();
    ScalarField out(g);
    for (std::size_t x = 0; x < g.size(); ++x) {
        double s = 0.0;
        for (int i = 0; i < d; ++i) {
            const std::size_t xb = g.backward(x, i);
            const std::size_t xf = g.forward(x, i);
            // flux_i(x - e_i) - flux_i(x)
            s += a(xb, i) * (v[x] - v[xb]) - a(x, i) * (v[xf] - v[x]);
        }
        out[x] = s;
    }
    return out;
}

ScalarField apply_constant(const Matrix& A, const ScalarField& v) {
    const auto& g = v.grid;
    const int d = g.dim();
    if (A.rows() != d || A.cols() != d) throw std::invalid_argument("matrix has wrong size");
    const VectorField grad = forward_diff(v);
    VectorField flux(g);
    for (std::size_t x = 0; x < g.size(); ++x)
        for (int i = 0; i < d; ++i) {
            double s = 0.0;
            for (int j = 0; j < d; ++j) s += A(i, j) * grad(x, j);
            flux(x, i) = s;
        }
    return backward_diff_div(flux);
}

MatrixField hessian(const ScalarField& v) {
    const auto& g = v.grid;
    const int d = g.dim();
    MatrixField out(g);
    const VectorField grad = forward_diff(v);
    for (std::size_t x = 0; x < g.size(); ++x)
        for (int i = 0; i < d; ++i) {
            const std::size_t xb = g.backward(x, i);
            for (int j = 0; j < d; ++j) out(x, i, j) = -(grad(xb, j) - grad(x, j));
        }
    return out;
}

MatrixField forward_hessian(const ScalarField& v) {
    const auto& g = v.grid;
    const int d = g.dim();
    MatrixField out(g);
    const VectorField grad = forward_diff(v);
    for (std::size_t x = 0; x < g.size(); ++x)
        for (int i = 0; i < d; ++i) {
            const std::size_t xf = g.forward(x, i);
            for (int j = 0; j < d; ++j) out(x, i, j) = grad(xf, j) - grad(x, j);
        }
    return out;
}

double spatial_mean(const ScalarField& v) {
    // Neumaier summation keeps the mean accurate for large N.
    double sum = 0.0, comp = 0.0;
    for (double x : v.values) {
        const double t = sum + x;
        comp += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
        sum = t;
    }
    return (sum + comp) / static_cast<double>(v.size());
}

ScalarField mean_zero(const ScalarField& v) {
    ScalarField out = v;
    const double m = spatial_mean(v);
    for (auto& x : out.values) x -= m;
    return out;
}

void project_mean_zero(std::span<double> v) {
    if (v.empty()) return;
    double s = 0.0;
    for (double x : v) s += x;
    const double m = s / static_cast<double>(v.size());
    for (auto& x : v) x -= m;
}

double dot(std::span<const double> a, std::span<const double> b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double max_abs(std::span<const double> a) {
    double m = 0.0;
    for (double x : a) m = std::max(m, std::abs(x));
    return m;
}

double sum_squares(std::span<const double> a) { return dot(a, a); }

ScalarField contract(const Matrix& A, const MatrixField& M) {
    const auto& g = M.grid;
    const int d = g.dim();
    ScalarField out(g);
    for (std::size_t x = 0; x < g.size(); ++x) {
        double s = 0.0;
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) s += A(i, j) * M(x, i, j);
        out[x] = s;
    }
    return out;
}

ScalarField contract(const MatrixField& B, const MatrixField& M) {
    require_same_grid(B.grid, M.grid);
    ScalarField out(M.grid);
    const auto d2 = static_cast<std::size_t>(M.grid.dim() * M.grid.dim());
    for (std::size_t x = 0; x < M.grid.size(); ++x) {
        double s = 0.0;
        for (std::size_t k = 0; k < d2; ++k) s += B.values[x * d2 + k] * M.values[x * d2 + k];
        out[x] = s;
    }
    return out;
}

ScalarField delta(const TorusGrid& g, std::size_t y) {
    ScalarField out(g);
    out[y] = 1.0;
    return out;
}

}  // namespace homlab
