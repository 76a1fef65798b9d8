#include "homlab/elliptic.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <sstream>

#include <fftw3.h>

#include "homlab/stats.hpp"

namespace homlab {

namespace {

// The FFTW planner is not thread-safe; execution with new arrays is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

template <class T>
struct FftwBuffer {
    T* ptr = nullptr;
    explicit FftwBuffer(std::size_t n) : ptr(static_cast<T*>(fftw_malloc(sizeof(T) * std::max<std::size_t>(n, 1)))) {
        if (!ptr) throw std::bad_alloc();
    }
    ~FftwBuffer() { fftw_free(ptr); }
    FftwBuffer(const FftwBuffer&) = delete;
    FftwBuffer& operator=(const FftwBuffer&) = delete;
};

double abs_sum(std::span<const double> v) {
    NeumaierSum s;
    for (double x : v) s.add(std::abs(x));
    return s.value();
}

double plain_sum(std::span<const double> v) {
    NeumaierSum s;
    for (double x : v) s.add(x);
    return s.value();
}

void check_mean_zero(std::span<const double> f) {
    const double total = plain_sum(f);
    if (std::abs(total) > 1e-10 * abs_sum(f) + 1e-300) {
        throw std::invalid_argument("right-hand side must have zero sum");
    }
}

}  // namespace

void SolverConfig::validate() const {
    if (!(tolerance > 0.0)) throw std::invalid_argument("solver tolerance must be positive");
}

void require_converged(const SolveDiagnostics& diag, const std::string& what) {
    if (!diag.converged) {
        std::ostringstream os;
        os << what << ": CG did not converge after " << diag.iterations
           << " iterations (relative residual " << diag.residual << ")";
        throw NotConverged(os.str());
    }
}

bool is_spd(const Matrix& A) {
    if (A.rows() != A.cols() || A.rows() == 0) return false;
    const double scale = A.cwiseAbs().maxCoeff();
    if (!((A - A.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale)) return false;
    Eigen::LLT<Matrix> llt(0.5 * (A + A.transpose()));
    return llt.info() == Eigen::Success;
}

// -- spectral ------------------------------------------------------------------

struct SpectralSolver::Plans {
    fftw_plan forward = nullptr;
    fftw_plan backward = nullptr;
    ~Plans() {
        std::lock_guard<std::mutex> lock(planner_mutex());
        if (forward) fftw_destroy_plan(forward);
        if (backward) fftw_destroy_plan(backward);
    }
};

SpectralSolver::SpectralSolver(const TorusGrid& grid, const Matrix& A) : grid_(grid) {
    const int d = grid.dim();
    if (A.rows() != d || A.cols() != d) throw std::invalid_argument("matrix dimension does not match grid");
    if (!is_spd(A)) throw std::invalid_argument("constant coefficient matrix must be symmetric positive definite");

    const int L = grid.side();
    const int half = L / 2 + 1;
    spectral_size_ = grid.size() / static_cast<std::size_t>(L) * static_cast<std::size_t>(half);

    // FFTW is row-major with the last axis fastest, so its axis order is the
    // reverse of ours; the halved axis is x1.
    std::vector<int> n(static_cast<std::size_t>(d), L);
    plans_ = std::make_unique<Plans>();
    {
        FftwBuffer<double> re(grid.size());
        FftwBuffer<fftw_complex> co(spectral_size_);
        std::lock_guard<std::mutex> lock(planner_mutex());
        plans_->forward = fftw_plan_dft_r2c(d, n.data(), re.ptr, co.ptr, FFTW_ESTIMATE);
        plans_->backward = fftw_plan_dft_c2r(d, n.data(), co.ptr, re.ptr, FFTW_ESTIMATE);
    }
    if (!plans_->forward || !plans_->backward) throw std::runtime_error("FFTW planning failed");

    const Matrix S = 0.5 * (A + A.transpose());
    inv_symbol_.assign(spectral_size_, 0.0);
    std::vector<std::complex<double>> q(static_cast<std::size_t>(d));
    const double two_pi = 2.0 * std::numbers::pi;
    for (std::size_t m = 0; m < spectral_size_; ++m) {
        std::size_t rest = m;
        const auto k1 = static_cast<int>(rest % static_cast<std::size_t>(half));
        rest /= static_cast<std::size_t>(half);
        q[0] = std::polar(1.0, two_pi * k1 / L) - 1.0;
        bool zero = k1 == 0;
        for (int i = 1; i < d; ++i) {
            const auto ki = static_cast<int>(rest % static_cast<std::size_t>(L));
            rest /= static_cast<std::size_t>(L);
            q[i] = std::polar(1.0, two_pi * ki / L) - 1.0;
            zero = zero && ki == 0;
        }
        if (zero) continue;
        std::complex<double> sigma = 0.0;
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) sigma += std::conj(q[i]) * S(i, j) * q[j];
        inv_symbol_[m] = 1.0 / (sigma.real() * static_cast<double>(grid.size()));
    }
}

SpectralSolver::~SpectralSolver() = default;

void SpectralSolver::solve(std::span<const double> f, std::span<double> u) const {
    const std::size_t N = grid_.size();
    if (f.size() != N || u.size() != N) throw std::invalid_argument("field size does not match grid");
    FftwBuffer<double> re(N);
    FftwBuffer<fftw_complex> co(spectral_size_);
    std::copy(f.begin(), f.end(), re.ptr);
    fftw_execute_dft_r2c(plans_->forward, re.ptr, co.ptr);
    for (std::size_t m = 0; m < spectral_size_; ++m) {
        co.ptr[m][0] *= inv_symbol_[m];
        co.ptr[m][1] *= inv_symbol_[m];
    }
    fftw_execute_dft_c2r(plans_->backward, co.ptr, re.ptr);
    std::copy(re.ptr, re.ptr + N, u.begin());
    project_mean_zero(u);
}

ScalarField SpectralSolver::solve(const ScalarField& f) const {
    if (!(f.grid == grid_)) throw std::invalid_argument("field lives on a different grid");
    ScalarField u(grid_);
    solve(f.values, u.values);
    return u;
}

ScalarField solve_constant(const Matrix& A, const ScalarField& f) {
    if (!is_spd(A)) throw std::invalid_argument("constant coefficient matrix must be symmetric positive definite");
    check_mean_zero(f.values);
    return SpectralSolver(f.grid, A).solve(f);
}

// -- conjugate gradient ----------------------------------------------------------

VariableSolver::VariableSolver(const CoefficientField& a, const SolverConfig& cfg) : a_(a), cfg_(cfg) {
    cfg_.validate();
    if (!(a.min_entry() > 0.0)) throw std::invalid_argument("coefficients must be positive");
    if (cfg_.preconditioner == Preconditioner::ConstantSpectral) {
        const auto mean = a.arithmetic_mean();
        Matrix A = Matrix::Zero(a.grid.dim(), a.grid.dim());
        for (int i = 0; i < a.grid.dim(); ++i) A(i, i) = mean[i];
        precond_ = std::make_unique<SpectralSolver>(a.grid, A);
    }
}

VariableSolver::~VariableSolver() = default;

SolveResult VariableSolver::solve(const ScalarField& f_in) const {
    const auto start = std::chrono::steady_clock::now();
    if (!(f_in.grid == a_.grid)) throw std::invalid_argument("right-hand side lives on a different grid");
    check_mean_zero(f_in.values);

    const TorusGrid& g = a_.grid;
    const std::size_t N = g.size();
    ScalarField f = mean_zero(f_in);
    SolveResult out{ScalarField(g), {}};
    const double fnorm = norm2(f.values);
    if (fnorm == 0.0) {
        out.diagnostics.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return out;
    }

    const std::size_t cap = cfg_.iteration_cap(N);
    const double target = cfg_.tolerance * fnorm;
    std::vector<double>& x = out.u.values;
    std::vector<double> r(N), z(N), p(N);
    std::vector<double> best = x;
    double best_res = fnorm;
    std::size_t it = 0;

    auto precondition = [&](const std::vector<double>& in, std::vector<double>& res) {
        if (precond_) precond_->solve(in, res);
        else { res = in; project_mean_zero(res); }
    };
    auto true_residual = [&]() {
        const ScalarField Ax = apply_operator(a_, out.u);
        for (std::size_t s = 0; s < N; ++s) r[s] = f.values[s] - Ax.values[s];
        project_mean_zero(r);
        return norm2(r);
    };

    double res = fnorm;
    r = f.values;
    // Restart from the current iterate whenever the recursively updated
    // residual claims convergence that the true residual does not confirm.
    while (it < cap) {
        precondition(r, z);
        p = z;
        double rz = dot(r, z);
        bool claimed = false;
        while (it < cap) {
            const ScalarField Ap = apply_operator(a_, ScalarField(g, p));
            const double pAp = dot(p, Ap.values);
            if (!(pAp > 0.0)) break;
            const double alpha = rz / pAp;
            for (std::size_t s = 0; s < N; ++s) {
                x[s] += alpha * p[s];
                r[s] -= alpha * Ap.values[s];
            }
            project_mean_zero(x);
            project_mean_zero(r);
            ++it;
            res = norm2(r);
            if (res < best_res) {
                best_res = res;
                best = x;
            }
            if (res <= target) { claimed = true; break; }
            precondition(r, z);
            const double rz_new = dot(r, z);
            const double beta = rz_new / rz;
            rz = rz_new;
            for (std::size_t s = 0; s < N; ++s) p[s] = z[s] + beta * p[s];
        }
        res = true_residual();
        if (res <= target) break;
        if (!claimed) break;
    }

    if (res > target) {
        // Keep whichever iterate has the smaller true residual.
        std::vector<double> current = x;
        const double current_res = res;
        x = best;
        const double best_true = true_residual();
        if (current_res < best_true) {
            x = std::move(current);
            res = current_res;
        } else {
            res = best_true;
        }
    }
    out.diagnostics.iterations = it;
    out.diagnostics.residual = res / fnorm;
    out.diagnostics.converged = res <= target;
    out.diagnostics.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

SolveResult solve_variable(const CoefficientField& a, const ScalarField& f, const SolverConfig& cfg) {
    return VariableSolver(a, cfg).solve(f);
}

// -- right-hand sides ---------------------------------------------------------

RhsDescriptor RhsDescriptor::named(const std::string& name, int dim) {
    if (dim < 1) throw std::invalid_argument("dimension must be >= 1");
    RhsDescriptor f;
    auto unit = [dim](int axis, int freq) {
        std::vector<int> k(static_cast<std::size_t>(dim), 0);
        k[axis] = freq;
        return k;
    };
    if (name == "default") {
        f.terms.push_back({1.0, false, unit(0, 1)});
        if (dim >= 2) f.terms.push_back({1.0, true, unit(1, 2)});
    } else if (name == "cos-x1") {
        f.terms.push_back({1.0, false, unit(0, 1)});
    } else if (name == "one") {
        f.constant = 1.0;
    } else {
        throw std::invalid_argument("unknown right-hand side descriptor '" + name + "'");
    }
    return f;
}

double RhsDescriptor::evaluate(std::span<const double> x) const {
    double v = constant;
    for (const auto& t : terms) {
        if (t.k.size() != x.size()) throw std::invalid_argument("frequency vector has wrong dimension");
        double phase = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) phase += t.k[i] * x[i];
        phase *= 2.0 * std::numbers::pi;
        v += t.amplitude * (t.sine ? std::sin(phase) : std::cos(phase));
    }
    return v;
}

std::string RhsDescriptor::describe() const {
    std::ostringstream os;
    bool first = true;
    if (constant != 0.0 || terms.empty()) {
        os << constant;
        first = false;
    }
    for (const auto& t : terms) {
        if (!first) os << " + ";
        first = false;
        os << t.amplitude << "*" << (t.sine ? "sin" : "cos") << "(2pi*[";
        for (std::size_t i = 0; i < t.k.size(); ++i) os << (i ? "," : "") << t.k[i];
        os << "].x)";
    }
    return os.str();
}

ScalarField discretize_rhs(const RhsDescriptor& f, const TorusGrid& grid) {
    ScalarField out(grid);
    const auto d = static_cast<std::size_t>(grid.dim());
    std::vector<double> x(d);
    for (std::size_t s = 0; s < grid.size(); ++s) {
        const Coord c = grid.coords(s);
        for (std::size_t i = 0; i < d; ++i) x[i] = static_cast<double>(c[i]) / grid.side();
        out[s] = f.evaluate(x);
    }
    return mean_zero(out);
}

}  // namespace homlab
