#include "homlab/green.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "homlab/parallel.hpp"
#include "homlab/stats.hpp"

namespace homlab {

ScalarField green_rhs(const TorusGrid& grid, std::size_t y) {
    if (y >= grid.size()) throw std::out_of_range("source site out of range");
    ScalarField f(grid, -1.0 / static_cast<double>(grid.size()));
    f[y] += 1.0;
    return f;
}

GreenSlice green_slice(const VariableSolver& solver, std::size_t y) {
    SolveResult res = solver.solve(green_rhs(solver.field().grid, y));
    return GreenSlice{y, std::move(res.u), res.diagnostics};
}

GreenSlice green_slice(const CoefficientField& a, std::size_t y, const SolverConfig& cfg) {
    return green_slice(VariableSolver(a, cfg), y);
}

VectorField mixed_second_gradient(const VariableSolver& solver, std::size_t y, int k) {
    const TorusGrid& g = solver.field().grid;
    if (k < 0 || k >= g.dim()) throw std::out_of_range("direction out of range");
    const GreenSlice g0 = green_slice(solver, y);
    const GreenSlice g1 = green_slice(solver, g.forward(y, k));
    ScalarField diff(g);
    for (std::size_t x = 0; x < g.size(); ++x) diff[x] = g1.values[x] - g0.values[x];
    return forward_diff(diff);
}

VectorField mixed_second_gradient(const CoefficientField& a, std::size_t y, int k, const SolverConfig& cfg) {
    return mixed_second_gradient(VariableSolver(a, cfg), y, k);
}

std::vector<VectorField> mixed_second_gradients(const VariableSolver& solver, std::size_t y) {
    const TorusGrid& g = solver.field().grid;
    const GreenSlice g0 = green_slice(solver, y);
    std::vector<VectorField> out;
    for (int k = 0; k < g.dim(); ++k) {
        const GreenSlice gk = green_slice(solver, g.forward(y, k));
        ScalarField diff(g);
        for (std::size_t x = 0; x < g.size(); ++x) diff[x] = gk.values[x] - g0.values[x];
        out.push_back(forward_diff(diff));
    }
    return out;
}

GreenTable green_table(const VariableSolver& solver) {
    const TorusGrid& g = solver.field().grid;
    GreenTable t{g, {}};
    t.columns.reserve(g.size());
    for (std::size_t y = 0; y < g.size(); ++y) {
        GreenSlice s = green_slice(solver, y);
        require_converged(s.diagnostics, "Green's function");
        t.columns.push_back(std::move(s.values));
    }
    return t;
}

const char* decay_kind_name(DecayKind k) {
    switch (k) {
    case DecayKind::Annealed: return "annealed_grad";
    case DecayKind::Quenched: return "quenched_grad";
    case DecayKind::Mixed: return "annealed_mixed";
    }
    return "unknown";
}

namespace {

struct ShellAccum {
    std::vector<double> grad4;  // per shell mean of |nabla G|^4
    std::vector<double> gmax;   // per shell max of |nabla G|
    std::vector<double> mixed4;
    double residual = 0.0;
};

DecayFit fit_window(DecayKind kind, const std::vector<DecayShell>& shells, double r_lo, double r_hi) {
    DecayFit f;
    f.kind = kind;
    f.r_min = r_lo;
    f.r_max = r_hi;
    std::vector<double> x, y;
    for (const auto& s : shells) {
        if (s.kind != kind || s.radius < r_lo || s.radius > r_hi || !(s.value > 0.0)) continue;
        x.push_back(std::log(s.radius));
        y.push_back(std::log(s.value));
    }
    f.shells = x.size();
    if (x.size() >= 2) f.fit = fit_line(x, y);
    return f;
}

}  // namespace

DecayReport decay_stats(const SingleSiteMeasure& beta, const TorusGrid& grid, const SamplingPlan& plan,
                        const SolverConfig& cfg) {
    if (plan.exhaustive) throw std::invalid_argument("decay statistics use a Monte-Carlo plan");
    if (plan.realizations < 2) throw std::invalid_argument("Monte-Carlo plan needs at least 2 realizations");
    const int d = grid.dim();
    const std::size_t N = grid.size();

    // shell index per site, relative to the source at the origin
    std::vector<long> shell_of(N);
    long max_shell = 0;
    for (std::size_t x = 0; x < N; ++x) {
        shell_of[x] = std::lround(grid.torus_dist(x, 0));
        max_shell = std::max(max_shell, shell_of[x]);
    }
    const auto S = static_cast<std::size_t>(max_shell + 1);
    std::vector<std::size_t> count(S, 0);
    std::vector<double> radius(S, 0.0);
    for (std::size_t x = 0; x < N; ++x) {
        ++count[shell_of[x]];
        radius[shell_of[x]] += grid.torus_dist(x, 0);
    }
    for (std::size_t s = 0; s < S; ++s) {
        if (count[s]) radius[s] /= static_cast<double>(count[s]);
    }

    std::vector<ShellAccum> acc(plan.realizations);
    parallel_for(plan.realizations, [&](std::size_t r) {
        CounterRng rng = realization_stream(plan.seed, r);
        const VariableSolver solver(sample_field(beta, grid, rng), cfg);
        const GreenSlice g0 = green_slice(solver, 0);
        require_converged(g0.diagnostics, "Green's function");
        const VectorField grad = forward_diff(g0.values);
        const std::vector<VectorField> mixed = mixed_second_gradients(solver, 0);

        ShellAccum& a = acc[r];
        a.grad4.assign(S, 0.0);
        a.gmax.assign(S, 0.0);
        a.mixed4.assign(S, 0.0);
        a.residual = g0.diagnostics.residual;
        for (std::size_t x = 0; x < N; ++x) {
            double g2 = 0.0, m2 = 0.0;
            for (int i = 0; i < d; ++i) {
                g2 += grad(x, i) * grad(x, i);
                for (int k = 0; k < d; ++k) m2 += mixed[k](x, i) * mixed[k](x, i);
            }
            const auto s = static_cast<std::size_t>(shell_of[x]);
            a.grad4[s] += g2 * g2;
            a.mixed4[s] += m2 * m2;
            a.gmax[s] = std::max(a.gmax[s], std::sqrt(g2));
        }
        for (std::size_t s = 0; s < S; ++s) {
            if (count[s]) {
                a.grad4[s] /= static_cast<double>(count[s]);
                a.mixed4[s] /= static_cast<double>(count[s]);
            }
        }
    });

    DecayReport rep;
    rep.dim = d;
    rep.side = grid.side();
    rep.realizations = plan.realizations;
    std::vector<double> col(plan.realizations);
    auto fourth_root = [](const McEstimate& e, double& se) {
        const double v = std::pow(std::max(e.mean, 0.0), 0.25);
        se = v > 0.0 ? e.se / (4.0 * std::pow(e.mean, 0.75)) : 0.0;
        return v;
    };
    for (std::size_t s = 0; s < S; ++s) {
        if (!count[s]) continue;
        DecayShell base;
        base.shell = static_cast<long>(s);
        base.radius = radius[s];
        base.sites = count[s];

        for (std::size_t r = 0; r < plan.realizations; ++r) col[r] = acc[r].grad4[s];
        DecayShell an = base;
        an.kind = DecayKind::Annealed;
        an.value = fourth_root(summarize(col), an.se);
        rep.shells.push_back(an);

        DecayShell qu = base;
        qu.kind = DecayKind::Quenched;
        for (std::size_t r = 0; r < plan.realizations; ++r) qu.value = std::max(qu.value, acc[r].gmax[s]);
        rep.shells.push_back(qu);

        for (std::size_t r = 0; r < plan.realizations; ++r) col[r] = acc[r].mixed4[s];
        DecayShell mx = base;
        mx.kind = DecayKind::Mixed;
        mx.value = fourth_root(summarize(col), mx.se);
        rep.shells.push_back(mx);
    }
    for (const auto& a : acc) rep.max_solver_residual = std::max(rep.max_solver_residual, a.residual);

    const double r_lo = 2.0;
    const double r_hi = grid.side() / 4.0;
    rep.annealed = fit_window(DecayKind::Annealed, rep.shells, r_lo, r_hi);
    rep.quenched = fit_window(DecayKind::Quenched, rep.shells, r_lo, r_hi);
    rep.mixed = fit_window(DecayKind::Mixed, rep.shells, r_lo, r_hi);

    rep.annealed_monotone = true;
    const DecayShell* prev = nullptr;
    for (const auto& s : rep.shells) {
        if (s.kind != DecayKind::Annealed || s.radius < r_lo || s.radius > r_hi) continue;
        if (prev && s.value > prev->value + 2.0 * std::hypot(s.se, prev->se)) rep.annealed_monotone = false;
        prev = &s;
    }
    return rep;
}

CoefficientField lift_to_three_dimensions(const CoefficientField& a2) {
    if (a2.grid.dim() != 2) throw std::invalid_argument("dimension reduction expects a 2-d field");
    const int L = a2.grid.side();
    const TorusGrid g3(3, L);
    CoefficientField a3(g3);
    const std::size_t n2 = a2.grid.size();
    for (std::size_t x3 = 0; x3 < static_cast<std::size_t>(L); ++x3) {
        for (std::size_t x = 0; x < n2; ++x) {
            const std::size_t s = x + x3 * n2;
            a3(s, 0) = a2(x, 0);
            a3(s, 1) = a2(x, 1);
            a3(s, 2) = 1.0;
        }
    }
    return a3;
}

DimensionReductionReport dimension_reduction_check(const CoefficientField& a2, const SolverConfig& cfg) {
    const CoefficientField a3 = lift_to_three_dimensions(a2);
    const GreenSlice g2 = green_slice(a2, 0, cfg);
    const GreenSlice g3 = green_slice(a3, 0, cfg);
    require_converged(g2.diagnostics, "2-d Green's function");
    require_converged(g3.diagnostics, "3-d Green's function");

    DimensionReductionReport rep;
    rep.side = a2.grid.side();
    const std::size_t n2 = a2.grid.size();
    const auto L = static_cast<std::size_t>(rep.side);
    for (std::size_t x = 0; x < n2; ++x) {
        NeumaierSum s;
        for (std::size_t x3 = 0; x3 < L; ++x3) s.add(g3.values[x + x3 * n2]);
        rep.max_discrepancy = std::max(rep.max_discrepancy, std::abs(g2.values[x] - s.value()));
        rep.scale = std::max(rep.scale, std::abs(g2.values[x]));
    }
    rep.mean2 = spatial_mean(g2.values);
    rep.mean3 = spatial_mean(g3.values);
    rep.tolerance = 10.0 * cfg.tolerance * rep.scale;
    rep.passed = rep.max_discrepancy <= rep.tolerance;
    return rep;
}

}  // namespace homlab
