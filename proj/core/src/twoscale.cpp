#include "homlab/twoscale.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "homlab/green.hpp"
#include "homlab/parallel.hpp"
#include "homlab/stats.hpp"

namespace homlab {

namespace {

void require_same(const TorusGrid& a, const TorusGrid& b) {
    if (!(a == b)) throw std::invalid_argument("fields live on different grids");
}

}  // namespace

ScalarField assemble_z(const ScalarField& u, const ScalarField& u0, const CorrectorSet& cs) {
    require_same(u.grid, u0.grid);
    require_same(u.grid, cs.grid);
    const TorusGrid& g = u.grid;
    ScalarField z(g);
    for (std::size_t x = 0; x < g.size(); ++x) {
        double s = u[x] - u0[x];
        for (int j = 0; j < g.dim(); ++j) s -= cs.phi[j][x] * (u0[g.forward(x, j)] - u0[x]);
        z[x] = s;
    }
    return z;
}

Decomposition decomposition(const CoefficientField& a, const CorrectorSet& cs, const ScalarField& u0,
                            const Matrix& a_hom, const Matrix& a_hom_L) {
    require_same(a.grid, u0.grid);
    require_same(a.grid, cs.grid);
    const TorusGrid& grid = a.grid;
    const int d = grid.dim();
    if (a_hom.rows() != d || a_hom.cols() != d || a_hom_L.rows() != d || a_hom_L.cols() != d) {
        throw std::invalid_argument("homogenized matrices must be d x d");
    }
    if (!a_hom.allFinite() || !a_hom_L.allFinite()) throw std::invalid_argument("homogenized matrices must be finite");

    Decomposition dec{VectorField(grid), ScalarField(grid), ScalarField(grid), b_field(a, cs), hessian(u0)};
    const MatrixField second = forward_hessian(u0);
    for (std::size_t x = 0; x < grid.size(); ++x) {
        for (int i = 0; i < d; ++i) {
            const std::size_t xi = grid.forward(x, i);
            double s = 0.0;
            for (int j = 0; j < d; ++j) s += cs.phi[j][xi] * second(x, i, j);
            dec.g(x, i) = -a(x, i) * s;
        }
        double r1 = 0.0, r2 = 0.0;
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) {
                const double h = dec.hessian(x, i, j);
                r1 += (a_hom_L(i, j) - a_hom(i, j)) * h;
                r2 += (dec.b(x, i, j) - a_hom_L(i, j)) * h;
            }
        }
        dec.r1[x] = r1;
        dec.r2[x] = r2;
    }
    return dec;
}

IdentityResidual decomposition_residual(const CoefficientField& a, const ScalarField& f, const ScalarField& u,
                                        const ScalarField& u0, const Matrix& a_hom,
                                        const CorrectorSet& cs, const Decomposition& dec) {
    const TorusGrid& g = a.grid;
    const int d = g.dim();
    const ScalarField z = assemble_z(u, u0, cs);
    const ScalarField lhs = apply_operator(a, z);
    const ScalarField div_g = backward_diff_div(dec.g);
    const ScalarField au = apply_operator(a, u);
    const ScalarField au0 = apply_constant(a_hom, u0);

    std::vector<ScalarField> rho;
    for (int j = 0; j < d; ++j) {
        VectorField flux(g);
        for (std::size_t x = 0; x < g.size(); ++x) {
            for (int i = 0; i < d; ++i) flux(x, i) = a(x, i) * (cs.grad[j](x, i) + (i == j ? 1.0 : 0.0));
        }
        rho.push_back(backward_diff_div(flux));
    }

    std::vector<double> raw(g.size()), corr(g.size());
    for (std::size_t x = 0; x < g.size(); ++x) {
        raw[x] = lhs[x] - (div_g[x] + dec.r1[x] + dec.r2[x]);
        double extra = (au[x] - f[x]) - (au0[x] - f[x]);
        for (int j = 0; j < d; ++j) extra -= rho[j][x] * (u0[g.forward(x, j)] - u0[x]);
        corr[x] = raw[x] - extra;
    }
    return {norm2(raw), norm2(corr), norm2(f.values)};
}

NormSet norms(const ScalarField& z) {
    const TorusGrid& g = z.grid;
    NormSet n;
    n.sum_sq = sum_squares(z.values);
    n.grad_sum_sq = sum_squares(forward_diff(z).values);
    const double L = g.side();
    const double vol = static_cast<double>(g.size());
    n.lattice = n.sum_sq + L * L * n.grad_sum_sq;
    n.eps_l2 = std::sqrt(n.sum_sq / vol);
    n.eps_h1 = std::sqrt(n.lattice / vol);
    return n;
}

double homogenization_error(const ScalarField& u, const ScalarField& u0) {
    require_same(u.grid, u0.grid);
    ScalarField diff(u.grid);
    for (std::size_t x = 0; x < u.size(); ++x) diff[x] = u[x] - u0[x];
    return norms(diff).eps_l2;
}

bool IdentityReport::passed() const {
    return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

// -- exhaustive identity verification ------------------------------------------

namespace {

struct ConfigData {
    CoefficientField a;
    CorrectorSet cs;
    GreenTable green;
    ScalarField u;
    ScalarField z;
    MatrixField b;
    ScalarField r2;
    Matrix ahom_raw;
};

struct Tracker {
    IdentityCheck check;
    explicit Tracker(std::string name, double threshold) {
        check.name = std::move(name);
        check.threshold = threshold;
    }
    void see(double discrepancy) { check.max_discrepancy = std::max(check.max_discrepancy, discrepancy); }
    IdentityCheck done() {
        check.passed = std::isfinite(check.max_discrepancy) && check.max_discrepancy <= check.threshold;
        return check;
    }
};

}  // namespace

IdentityReport verify_vertical_identities(const SingleSiteMeasure& beta, const TorusGrid& grid,
                                          const SolverConfig& cfg, const RhsDescriptor& rhs, std::size_t budget) {
    const Enumeration en(beta, grid, budget);
    const std::size_t C = en.count();
    const std::size_t N = grid.size();
    const int d = grid.dim();
    const auto du = static_cast<std::size_t>(d);
    const ScalarField f = discretize_rhs(rhs, grid);

    std::vector<ConfigData> data;
    data.reserve(C);
    for (std::size_t c = 0; c < C; ++c) {
        CoefficientField a = en.field(c);
        data.push_back(ConfigData{a, CorrectorSet{grid, {}, {}, {}}, GreenTable{grid, {}}, ScalarField(grid),
                                  ScalarField(grid), MatrixField(grid), ScalarField(grid), Matrix()});
    }
    parallel_for(C, [&](std::size_t c) {
        ConfigData& cd = data[c];
        const VariableSolver solver(cd.a, cfg);
        cd.cs = solve_correctors(solver);
        for (const auto& dg : cd.cs.diagnostics) require_converged(dg, "corrector");
        cd.green = green_table(solver);
        SolveResult ur = solver.solve(f);
        require_converged(ur.diagnostics, "u");
        cd.u = std::move(ur.u);
        cd.ahom_raw = ahom_L(cd.a, cd.cs).raw;
        cd.b = b_field(cd.a, cd.cs);
    });

    // Deterministic inputs: the exhaustive a_hom,L and u0 solved with it.
    Matrix B = Matrix::Zero(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            NeumaierSum s;
            for (std::size_t c = 0; c < C; ++c) s.add(en.probability(c) * data[c].ahom_raw(i, j));
            B(i, j) = s.value();
        }
    }
    const Matrix Bsym = 0.5 * (B + B.transpose());
    const ScalarField u0 = solve_constant(Bsym, f);
    const MatrixField H = hessian(u0);
    const MatrixField D2 = forward_hessian(u0);
    const VectorField grad_u0 = forward_diff(u0);
    for (auto& cd : data) {
        cd.z = assemble_z(cd.u, u0, cd.cs);
        for (std::size_t x = 0; x < N; ++x) {
            double r2 = 0.0;
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) r2 += (cd.b(x, i, j) - B(i, j)) * H(x, i, j);
            cd.r2[x] = r2;
        }
    }

    auto table = [&](const std::function<double(const ConfigData&)>& fn) {
        ConfigTable t(C);
        for (std::size_t c = 0; c < C; ++c) t[c] = fn(data[c]);
        return t;
    };
    auto vector_table = [&](const std::function<double(const ConfigData&, int)>& fn) {
        std::vector<double> t(C * du);
        for (std::size_t c = 0; c < C; ++c)
            for (int i = 0; i < d; ++i) t[c * du + i] = fn(data[c], i);
        return t;
    };

    constexpr double kVd = 1e-8;
    Tracker vd_phi("vd-phi", kVd), vd_grad_phi("vd-grad-phi", kVd), vd_u("vd-uL", kVd);
    Tracker step41("main-step4-1", kVd), step42("main-step4-2", kVd), iid("iid-commut", kVd);
    Tracker bound2("commutator-bound-q2", 1e-12), bound4("commutator-bound-q4", 1e-12);

    for (std::size_t y = 0; y < N; ++y) {
        // [nabla phi_j(y) + e_j]_y for every j
        std::vector<std::vector<double>> comm_phi(du);
        for (int j = 0; j < d; ++j) {
            const auto F = vector_table([&](const ConfigData& cd, int i) {
                return cd.cs.grad[j](y, i) + (i == j ? 1.0 : 0.0);
            });
            comm_phi[j] = commutator(F, en, y);

            for (double q : {2.0, 4.0}) {
                NeumaierSum lhs, rhs_sum;
                for (std::size_t c = 0; c < C; ++c) {
                    double nc = 0.0, nf = 0.0;
                    for (std::size_t i = 0; i < du; ++i) {
                        nc += comm_phi[j][c * du + i] * comm_phi[j][c * du + i];
                        nf += F[c * du + i] * F[c * du + i];
                    }
                    lhs.add(en.probability(c) * std::pow(nc, q / 2));
                    rhs_sum.add(en.probability(c) * std::pow(nf, q / 2));
                }
                const double excess = lhs.value() - std::pow(2.0, q) * rhs_sum.value();
                (q == 2.0 ? bound2 : bound4).see(std::max(excess, 0.0));
            }
        }
        const auto grad_u = vector_table([&](const ConfigData& cd, int i) {
            return cd.u[grid.forward(y, i)] - cd.u[y];
        });
        const auto comm_u = commutator(grad_u, en, y);
        const auto grad_z = vector_table([&](const ConfigData& cd, int i) {
            return cd.z[grid.forward(y, i)] - cd.z[y];
        });
        const auto comm_z = commutator(grad_z, en, y);
        const auto v3 = vector_table([&](const ConfigData& cd, int i) {
            double s = 0.0;
            for (int j = 0; j < d; ++j) s += D2(y, i, j) * cd.cs.phi[j][grid.forward(y, i)];
            return s;
        });
        const auto comm_3 = commutator(v3, en, y);

        for (std::size_t x = 0; x < N; ++x) {
            auto grad_y_dot = [&](std::size_t c, const std::vector<double>& F) {
                double s = 0.0;
                for (int k = 0; k < d; ++k) s += data[c].green.grad_y(x, y, k) * F[c * du + k];
                return s;
            };
            auto grad_xy_dot = [&](std::size_t c, int i, const std::vector<double>& F) {
                double s = 0.0;
                for (int k = 0; k < d; ++k) s += data[c].green.grad_xy(x, i, y, k) * F[c * du + k];
                return s;
            };

            for (int j = 0; j < d; ++j) {
                const auto lhs = vertical_derivative(table([&](const ConfigData& cd) { return cd.cs.phi[j][x]; }), en, y);
                for (std::size_t c = 0; c < C; ++c) vd_phi.see(std::abs(lhs[c] + grad_y_dot(c, comm_phi[j])));

                for (int i = 0; i < d; ++i) {
                    const auto lg = vertical_derivative(
                        table([&](const ConfigData& cd) { return cd.cs.grad[j](x, i); }), en, y);
                    for (std::size_t c = 0; c < C; ++c) {
                        vd_grad_phi.see(std::abs(lg[c] + grad_xy_dot(c, i, comm_phi[j])));
                    }

                    const std::size_t xi = grid.forward(x, i);
                    const auto lb = vertical_derivative(table([&](const ConfigData& cd) { return cd.b(xi, i, j); }), en, y);
                    for (std::size_t c = 0; c < C; ++c) {
                        const double local = x == y ? comm_phi[j][c * du + i] : 0.0;
                        const double rhs_val = local - data[c].a(x, i) * grad_xy_dot(c, i, comm_phi[j]);
                        step41.see(std::abs(lb[c] - rhs_val));
                    }

                    // d(a(x) F)/dy - a(x) dF/dy = [F]_y delta(x - y), F = nabla phi_j + e_j at x
                    const auto fa = vertical_derivative(table([&](const ConfigData& cd) {
                        return cd.a(x, i) * (cd.cs.grad[j](x, i) + (i == j ? 1.0 : 0.0));
                    }), en, y);
                    for (std::size_t c = 0; c < C; ++c) {
                        const double rhs_val = x == y ? comm_phi[j][c * du + i] : 0.0;
                        iid.see(std::abs(fa[c] - data[c].a(x, i) * lg[c] - rhs_val));
                    }
                }
            }

            const auto lu = vertical_derivative(table([&](const ConfigData& cd) { return cd.u[x]; }), en, y);
            for (std::size_t c = 0; c < C; ++c) vd_u.see(std::abs(lu[c] + grad_y_dot(c, comm_u)));

            const auto lz = vertical_derivative(table([&](const ConfigData& cd) { return cd.z[x]; }), en, y);
            for (std::size_t c = 0; c < C; ++c) {
                double s = 0.0;
                for (int k = 0; k < d; ++k) {
                    double fk = comm_z[c * du + k] + comm_3[c * du + k];
                    for (int j = 0; j < d; ++j) fk += (grad_u0(y, j) - grad_u0(x, j)) * comm_phi[j][c * du + k];
                    s += data[c].green.grad_y(x, y, k) * fk;
                }
                step42.see(std::abs(lz[c] + s));
            }
        }
    }

    IdentityReport rep;
    rep.dim = d;
    rep.side = grid.side();
    rep.measure = beta.describe();
    rep.configurations = C;
    for (Tracker* t : {&vd_phi, &vd_grad_phi, &vd_u, &step41, &step42, &iid, &bound2, &bound4}) {
        rep.checks.push_back(t->done());
    }

    // E[r2(x)] = 0
    {
        double scale = 1.0;
        for (const auto& cd : data) scale = std::max(scale, max_abs(cd.r2.values));
        Tracker er2("mean-r2", 1e-12 * scale);
        for (std::size_t x = 0; x < N; ++x) {
            er2.see(std::abs(expectation(table([&](const ConfigData& cd) { return cd.r2[x]; }), en)));
        }
        rep.checks.push_back(er2.done());
    }

    // Martingale decomposition, (O.1) and SG for a few pairs.
    {
        const std::size_t e1 = grid.forward(0, 0);
        const std::vector<std::pair<ConfigTable, ConfigTable>> pairs = {
            {table([](const ConfigData& cd) { return cd.cs.phi[0][0]; }),
             table([](const ConfigData& cd) { return cd.cs.phi[0][0]; })},
            {table([](const ConfigData& cd) { return cd.cs.phi[0][0]; }),
             table([](const ConfigData& cd) { return cd.ahom_raw(0, 0); })},
            {table([](const ConfigData& cd) { return cd.ahom_raw(0, 0); }),
             table([](const ConfigData& cd) { return cd.ahom_raw(0, 0); })},
            {table([](const ConfigData& cd) { return cd.z[0]; }),
             table([](const ConfigData& cd) { return cd.u[0]; })},
            {table([](const ConfigData& cd) { return cd.a(0, 0); }),
             table([e1](const ConfigData& cd) { return cd.a(e1, 0); })},
        };
        Tracker mart("martingale-27", 1e-12), o1("covariance-O1", 1e-12), sg("spectral-gap-O2", 1e-12);
        for (const auto& [zeta, zeta_t] : pairs) {
            const CovarianceReport r = covariance_check(zeta, zeta_t, en);
            mart.see(std::abs(r.martingale_sum - r.covariance) / r.scale);
            o1.see(std::max(0.0, r.covariance - r.covariance_bound) / r.scale);
            sg.see(std::max(0.0, r.variance - r.spectral_gap_bound) / r.scale);
        }
        rep.checks.push_back(mart.done());
        rep.checks.push_back(o1.done());
        rep.checks.push_back(sg.done());
    }
    return rep;
}

}  // namespace homlab
