#include "homlab/corrector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "homlab/parallel.hpp"

namespace homlab {

bool CorrectorSet::converged() const {
    return std::all_of(diagnostics.begin(), diagnostics.end(), [](const auto& d) { return d.converged; });
}

CorrectorSet solve_correctors(const VariableSolver& solver) {
    const CoefficientField& a = solver.field();
    const TorusGrid& g = a.grid;
    const int d = g.dim();
    CorrectorSet cs{g, {}, {}, {}};
    for (int j = 0; j < d; ++j) {
        // rhs = -nabla*(a e_j): only the j-th flux component is nonzero
        ScalarField rhs(g);
        for (std::size_t x = 0; x < g.size(); ++x) rhs[x] = a(x, j) - a(g.backward(x, j), j);
        SolveResult res = solver.solve(rhs);
        cs.grad.push_back(forward_diff(res.u));
        cs.phi.push_back(std::move(res.u));
        cs.diagnostics.push_back(res.diagnostics);
    }
    return cs;
}

CorrectorSet solve_correctors(const CoefficientField& a, const SolverConfig& cfg) {
    return solve_correctors(VariableSolver(a, cfg));
}

HomogenizedEstimate ahom_L(const CoefficientField& a, const CorrectorSet& cs) {
    const TorusGrid& g = a.grid;
    if (!(cs.grid == g)) throw std::invalid_argument("correctors live on a different grid");
    const int d = g.dim();
    HomogenizedEstimate est;
    est.raw = Matrix::Zero(d, d);
    for (int j = 0; j < d; ++j) {
        for (int i = 0; i < d; ++i) {
            NeumaierSum s;
            for (std::size_t x = 0; x < g.size(); ++x) {
                s.add(a(x, i) * (cs.grad[j](x, i) + (i == j ? 1.0 : 0.0)));
            }
            est.raw(i, j) = s.value() / static_cast<double>(g.size());
        }
    }
    est.symmetric = 0.5 * (est.raw + est.raw.transpose());
    est.asymmetry = (est.raw - est.raw.transpose()).cwiseAbs().maxCoeff();
    return est;
}

EnsembleHomogenized ahom_L_ensemble(const SingleSiteMeasure& beta, const TorusGrid& grid,
                                    const SamplingPlan& plan, const SolverConfig& cfg) {
    const int d = grid.dim();
    EnsembleHomogenized out;
    out.mean = Matrix::Zero(d, d);
    out.se = Matrix::Zero(d, d);
    out.exhaustive = plan.exhaustive;

    if (plan.exhaustive) {
        const Enumeration en(beta, grid, plan.budget);
        std::vector<Matrix> vals(en.count());
        std::vector<double> asym(en.count());
        parallel_for(en.count(), [&](std::size_t c) {
            const CoefficientField a = en.field(c);
            const CorrectorSet cs = solve_correctors(a, cfg);
            for (const auto& dg : cs.diagnostics) require_converged(dg, "corrector");
            const auto est = ahom_L(a, cs);
            vals[c] = est.symmetric;
            asym[c] = est.asymmetry;
        });
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) {
                NeumaierSum s;
                for (std::size_t c = 0; c < en.count(); ++c) s.add(en.probability(c) * vals[c](i, j));
                out.mean(i, j) = s.value();
            }
        }
        out.count = en.count();
        out.max_asymmetry = *std::max_element(asym.begin(), asym.end());
        return out;
    }

    if (plan.realizations < 2) throw std::invalid_argument("Monte-Carlo plan needs at least 2 realizations");
    out.samples.resize(plan.realizations);
    std::vector<double> asym(plan.realizations);
    parallel_for(plan.realizations, [&](std::size_t r) {
        CounterRng rng = realization_stream(plan.seed, r);
        const CoefficientField a = sample_field(beta, grid, rng);
        const CorrectorSet cs = solve_correctors(a, cfg);
        for (const auto& dg : cs.diagnostics) require_converged(dg, "corrector");
        const auto est = ahom_L(a, cs);
        out.samples[r] = est.symmetric;
        asym[r] = est.asymmetry;
    });
    std::vector<double> column(plan.realizations);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            for (std::size_t r = 0; r < plan.realizations; ++r) column[r] = out.samples[r](i, j);
            const McEstimate e = summarize(column);
            out.mean(i, j) = e.mean;
            out.se(i, j) = e.se;
        }
    }
    out.count = plan.realizations;
    out.max_asymmetry = *std::max_element(asym.begin(), asym.end());
    return out;
}

MatrixField b_field(const CoefficientField& a, const CorrectorSet& cs) {
    const TorusGrid& g = a.grid;
    if (!(cs.grid == g)) throw std::invalid_argument("correctors live on a different grid");
    const int d = g.dim();
    MatrixField b(g);
    for (std::size_t x = 0; x < g.size(); ++x) {
        for (int i = 0; i < d; ++i) {
            const std::size_t xm = g.backward(x, i);
            for (int j = 0; j < d; ++j) {
                b(x, i, j) = a(xm, i) * (cs.grad[j](xm, i) + (i == j ? 1.0 : 0.0));
            }
        }
    }
    return b;
}

CorrectorMomentSample corrector_moment_sample(const CorrectorSet& cs) {
    const TorusGrid& g = cs.grid;
    const int d = g.dim();
    NeumaierSum p2, g4;
    for (int j = 0; j < d; ++j) {
        for (std::size_t x = 0; x < g.size(); ++x) {
            p2.add(cs.phi[j][x] * cs.phi[j][x]);
            double sq = 0.0;
            for (int i = 0; i < d; ++i) sq += cs.grad[j](x, i) * cs.grad[j](x, i);
            g4.add(sq * sq);
        }
    }
    const double n = static_cast<double>(g.size()) * d;
    return {p2.value() / n, g4.value() / n};
}

MomentRow corrector_moments(const SingleSiteMeasure& beta, const TorusGrid& grid, const SamplingPlan& plan,
                            const SolverConfig& cfg) {
    MomentRow row;
    row.dim = grid.dim();
    row.side = grid.side();
    if (plan.exhaustive) {
        const Enumeration en(beta, grid, plan.budget);
        std::vector<CorrectorMomentSample> vals(en.count());
        parallel_for(en.count(), [&](std::size_t c) {
            const CorrectorSet cs = solve_correctors(en.field(c), cfg);
            vals[c] = corrector_moment_sample(cs);
        });
        NeumaierSum p2, g4;
        for (std::size_t c = 0; c < en.count(); ++c) {
            p2.add(en.probability(c) * vals[c].phi2);
            g4.add(en.probability(c) * vals[c].grad4);
        }
        row.count = en.count();
        row.phi2 = {p2.value(), 0.0, 0.0, en.count()};
        row.grad4 = {g4.value(), 0.0, 0.0, en.count()};
        return row;
    }
    if (plan.realizations < 2) throw std::invalid_argument("Monte-Carlo plan needs at least 2 realizations");
    std::vector<double> p2(plan.realizations), g4(plan.realizations);
    parallel_for(plan.realizations, [&](std::size_t r) {
        CounterRng rng = realization_stream(plan.seed, r);
        const CorrectorSet cs = solve_correctors(sample_field(beta, grid, rng), cfg);
        for (const auto& dg : cs.diagnostics) require_converged(dg, "corrector");
        const auto s = corrector_moment_sample(cs);
        p2[r] = s.phi2;
        g4[r] = s.grad4;
    });
    row.samples.resize(plan.realizations);
    for (std::size_t r = 0; r < plan.realizations; ++r) row.samples[r] = {p2[r], g4[r]};
    row.count = plan.realizations;
    row.phi2 = summarize(p2);
    row.grad4 = summarize(g4);
    return row;
}

LogGrowthFit fit_log_growth(const std::vector<MomentRow>& rows) {
    if (rows.size() < 3) throw std::invalid_argument("log-growth fit needs at least 3 sides");
    const auto n = static_cast<Eigen::Index>(rows.size());
    Matrix X(n, 3);
    Eigen::VectorXd y(n), w(n);
    double floor = std::numeric_limits<double>::infinity();
    for (const auto& r : rows) {
        if (r.phi2.se > 0.0) floor = std::min(floor, r.phi2.se);
    }
    if (!std::isfinite(floor)) floor = 1.0;
    for (Eigen::Index k = 0; k < n; ++k) {
        const double l = std::log(static_cast<double>(rows[k].side));
        X(k, 0) = 1.0;
        X(k, 1) = l;
        X(k, 2) = l * l;
        y(k) = rows[k].phi2.mean;
        const double se = std::max(rows[k].phi2.se, floor);
        w(k) = 1.0 / (se * se);
    }
    const Matrix XtWX = X.transpose() * w.asDiagonal() * X;
    const Eigen::VectorXd XtWy = X.transpose() * w.asDiagonal() * y;
    const Matrix cov = XtWX.ldlt().solve(Matrix::Identity(3, 3));
    const Eigen::VectorXd c = XtWX.ldlt().solve(XtWy);
    LogGrowthFit fit;
    fit.c0 = c(0);
    fit.c1 = c(1);
    fit.c2 = c(2);
    fit.se_c1 = std::sqrt(std::max(cov(1, 1), 0.0));
    fit.se_c2 = std::sqrt(std::max(cov(2, 2), 0.0));
    fit.at_most_logarithmic = fit.c2 <= 2.0 * fit.se_c2 + 1e-14;
    return fit;
}

MomentReport corrector_moments(const SingleSiteMeasure& beta, int dim, const std::vector<int>& sides,
                               const SamplingPlan& plan, const SolverConfig& cfg) {
    MomentReport rep;
    for (std::size_t k = 0; k < sides.size(); ++k) {
        SamplingPlan p = plan;
        p.seed = side_seed(plan.seed, sides[k]);
        rep.rows.push_back(corrector_moments(beta, TorusGrid(dim, sides[k]), p, cfg));
    }
    if (!rep.rows.empty()) {
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        for (const auto& r : rep.rows) {
            lo = std::min(lo, r.grad4.mean);
            hi = std::max(hi, r.grad4.mean);
        }
        rep.grad4_spread = lo > 0.0 ? hi / lo : (hi == 0.0 ? 1.0 : std::numeric_limits<double>::infinity());
    }
    if (rep.rows.size() >= 2) {
        const double last = rep.rows.back().phi2.mean;
        const double prev = rep.rows[rep.rows.size() - 2].phi2.mean;
        rep.phi2_last_ratio = prev > 0.0 ? last / prev : (last == 0.0 ? 1.0 : std::numeric_limits<double>::infinity());
    }
    if (dim == 2 && rep.rows.size() >= 3) rep.log_fit = fit_log_growth(rep.rows);
    return rep;
}

}  // namespace homlab
