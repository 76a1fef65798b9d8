#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "homlab/green.hpp"
#include "oracle.hpp"

using namespace homlab;

namespace {

const SingleSiteMeasure kTwoPoint = SingleSiteMeasure::two_point(0.5, 0.25);

/// Dense Green function column for source y.
std::vector<double> dense_green(const CoefficientField& a, std::size_t y) {
    std::vector<double> rhs(a.grid.size(), -1.0 / static_cast<double>(a.grid.size()));
    rhs[y] += 1.0;
    return oracle::dense_solve(a, rhs);
}

}  // namespace

TEST(GreenRhs, MeanFreeUnitSource) {
    const TorusGrid g(2, 4);
    const ScalarField r = green_rhs(g, 5);
    EXPECT_NEAR(r[5], 1.0 - 1.0 / 16.0, 1e-15);
    EXPECT_NEAR(r[0], -1.0 / 16.0, 1e-15);
    EXPECT_THROW(green_rhs(g, 16), std::out_of_range);
}

TEST(GreenSlice, UnitCoefficientsMatchSpectralOracle) {
    const TorusGrid g(2, 8);
    const GreenSlice s = green_slice(CoefficientField(g, 1.0), 0);
    const ScalarField ref = solve_constant(Matrix::Identity(2, 2), green_rhs(g, 0));
    EXPECT_LE(oracle::max_diff(s.values.values, ref.values), 1e-9);
    EXPECT_LE(std::abs(spatial_mean(s.values)), 1e-14);
}

TEST(GreenSlice, RandomFieldMatchesDenseOracle) {
    const TorusGrid g(3, 4);
    const CoefficientField a = oracle::random_field(g, 0.1, 2);
    for (std::size_t y : {std::size_t{0}, std::size_t{17}}) {
        const GreenSlice s = green_slice(a, y);
        EXPECT_TRUE(s.diagnostics.converged);
        EXPECT_LE(oracle::max_diff(s.values.values, dense_green(a, y)), 1e-8);
    }
}

TEST(GreenSlice, SymmetryForRandomPairs) {
    const TorusGrid g(2, 8);
    CounterRng rng(5);
    const CoefficientField a = sample_field(kTwoPoint, g, rng);
    const VariableSolver solver(a);
    for (int k = 0; k < 10; ++k) {
        const std::size_t x = rng() % g.size(), y = rng() % g.size();
        const double gxy = green_slice(solver, y).values[x];
        const double gyx = green_slice(solver, x).values[y];
        EXPECT_NEAR(gxy, gyx, 1e-8);
    }
}

TEST(GreenSlice, ShiftCovariance) {
    const TorusGrid g(2, 8);
    CounterRng rng(6);
    const CoefficientField a = sample_field(kTwoPoint, g, rng);
    for (int k = 0; k < 3; ++k) {
        const std::size_t y = rng() % g.size();
        const GreenSlice s = green_slice(a, y);
        // G(x, y; a) = G(x - y, 0; a(. + y))
        const GreenSlice s0 = green_slice(a.shifted(y), 0);
        for (std::size_t x = 0; x < g.size(); ++x) EXPECT_NEAR(s.values[x], s0.values[g.difference(x, y)], 1e-8);
    }
}

TEST(MixedGradient, UnitCoefficientsAgainstSpectralDifferences) {
    const TorusGrid g(2, 8);
    const CoefficientField a(g, 1.0);
    const std::size_t y = 10;
    for (int k = 0; k < 2; ++k) {
        const VectorField m = mixed_second_gradient(a, y, k);
        const ScalarField g0 = solve_constant(Matrix::Identity(2, 2), green_rhs(g, y));
        const ScalarField g1 = solve_constant(Matrix::Identity(2, 2), green_rhs(g, g.forward(y, k)));
        ScalarField dy(g);
        for (std::size_t x = 0; x < g.size(); ++x) dy[x] = g1[x] - g0[x];
        const VectorField ref = forward_diff(dy);
        EXPECT_LE(oracle::max_diff(m.values, ref.values), 1e-9);
    }
}

TEST(MixedGradient, ConstantKernelIsTranslationAntisymmetric) {
    // For a translation invariant symmetric kernel K(x - y), the mixed
    // gradient at (x, y) equals the one at (y, x) reflected through the
    // swap of the forward and backward differences. We check the simpler
    // consequence grad_x grad_y G(x, y) = grad_x grad_y G(x + z, y + z).
    const TorusGrid g(2, 6);
    const CoefficientField a(g, 1.0);
    const VectorField m0 = mixed_second_gradient(a, 0, 1);
    const std::size_t z = 8;
    const VectorField mz = mixed_second_gradient(a, z, 1);
    for (std::size_t x = 0; x < g.size(); ++x)
        for (int i = 0; i < 2; ++i) EXPECT_NEAR(mz(g.translate(x, z), i), m0(x, i), 1e-9);
}

TEST(MixedGradient, SumOverSourcesVanishes) {
    const TorusGrid g(2, 4);
    const CoefficientField a = oracle::random_field(g, 0.2, 3);
    const GreenTable table = green_table(VariableSolver(a));
    for (std::size_t x = 0; x < g.size(); ++x)
        for (int k = 0; k < 2; ++k) {
            double s = 0.0;
            for (std::size_t y = 0; y < g.size(); ++y) s += table.grad_y(x, y, k);
            EXPECT_NEAR(s, 0.0, 1e-12);
        }
}

TEST(MixedGradient, SlicesAgreeWithFullTable) {
    const TorusGrid g(2, 4);
    const CoefficientField a = oracle::random_field(g, 0.2, 4);
    const VariableSolver solver(a);
    const GreenTable table = green_table(solver);
    for (std::size_t y = 0; y < g.size(); y += 3) {
        const auto all = mixed_second_gradients(solver, y);
        for (int k = 0; k < 2; ++k) {
            const VectorField m = mixed_second_gradient(solver, y, k);
            for (std::size_t x = 0; x < g.size(); ++x)
                for (int i = 0; i < 2; ++i) {
                    // direct finite differencing of the dense table
                    const double ref = table(g.forward(x, i), g.forward(y, k)) - table(x, g.forward(y, k)) -
                                       table(g.forward(x, i), y) + table(x, y);
                    EXPECT_NEAR(m(x, i), ref, 1e-10);
                    EXPECT_NEAR(table.grad_xy(x, i, y, k), ref, 1e-12);
                    EXPECT_NEAR(all[k](x, i), ref, 1e-10);
                }
        }
    }
    EXPECT_THROW(mixed_second_gradient(solver, 0, 2), std::out_of_range);
}

TEST(DecayStats, ConstantCoefficientsMatchSpectralShellOracle) {
    // a = Id: every statistic is deterministic, so the annealed curve is the
    // shell RMS-of-fourth-powers of |grad G| for the spectral Green function
    const int L = 32;
    const TorusGrid g(3, L);
    const auto rep = decay_stats(SingleSiteMeasure::point_mass({1.0, 1.0, 1.0}), g, SamplingPlan::monte_carlo(2, 1));
    const ScalarField G = solve_constant(Matrix::Identity(3, 3), green_rhs(g, 0));
    std::map<long, std::pair<double, double>> sum4_r;  // shell -> (sum |grad G|^4, sum r)
    std::map<long, int> count;
    for (std::size_t x = 0; x < g.size(); ++x) {
        const auto c = oracle::coords(3, L, x);
        double r2 = 0.0, g2 = 0.0;
        for (int i = 0; i < 3; ++i) {
            const int m = std::min(c[i], L - c[i]);
            r2 += m * m;
            const double dg = G[oracle::shift(3, L, x, i, 1)] - G[x];
            g2 += dg * dg;
        }
        const long s = std::lround(std::sqrt(r2));
        sum4_r[s].first += g2 * g2;
        sum4_r[s].second += std::sqrt(r2);
        ++count[s];
    }
    std::vector<double> lx, ly;
    for (const auto& [s, v] : sum4_r) {
        const double r = v.second / count[s];
        if (r < 2.0 || r > L / 4.0) continue;
        lx.push_back(std::log(r));
        ly.push_back(0.25 * std::log(v.first / count[s]));
    }
    const double n = static_cast<double>(lx.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < lx.size(); ++k) {
        mx += lx[k] / n;
        my += ly[k] / n;
    }
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < lx.size(); ++k) {
        sxy += (lx[k] - mx) * (ly[k] - my);
        sxx += (lx[k] - mx) * (lx[k] - mx);
    }
    EXPECT_EQ(rep.annealed.shells, lx.size());
    EXPECT_NEAR(rep.annealed.fit.slope, sxy / sxx, 1e-6);
    // continuum |grad G| ~ r^{1-d}; torus images and the lattice steepen it somewhat
    EXPECT_LT(rep.annealed.fit.slope, -1.8);
    EXPECT_GT(rep.annealed.fit.slope, -2.6);
}

TEST(DecayStats, ShellsCoverTheWindowAndStatisticsAreConsistent) {
    const auto rep = decay_stats(kTwoPoint, TorusGrid(2, 16), SamplingPlan::monte_carlo(20, 3));
    EXPECT_EQ(rep.realizations, 20u);
    for (const auto& s : rep.shells) {
        EXPECT_GT(s.sites, 0u);
        EXPECT_GE(s.value, 0.0);
        EXPECT_GE(s.se, 0.0);
        EXPECT_NEAR(s.radius, static_cast<double>(s.shell), 0.5 + 1e-12);
    }
    // the quenched proxy is a maximum, so it dominates the fourth-moment root
    for (const auto& q : rep.shells) {
        if (q.kind != DecayKind::Quenched) continue;
        for (const auto& an : rep.shells)
            if (an.kind == DecayKind::Annealed && an.shell == q.shell) {
                EXPECT_GE(q.value, an.value - 1e-15);
            }
    }
    EXPECT_LE(rep.max_solver_residual, 1e-10);
    EXPECT_THROW(decay_stats(kTwoPoint, TorusGrid(2, 4), SamplingPlan::exact()), std::invalid_argument);
}

TEST(DecayStats, AnnealedCurveIsMonotoneInTheWindow) {
    const auto rep = decay_stats(kTwoPoint, TorusGrid(2, 32), SamplingPlan::monte_carlo(100, 11));
    EXPECT_TRUE(rep.annealed_monotone);
    EXPECT_LE(rep.annealed.fit.slope, -0.8);
}

TEST(DimensionReduction, LiftedFieldLayout) {
    const TorusGrid g(2, 4);
    const CoefficientField a2 = oracle::random_field(g, 0.3, 8);
    const CoefficientField a3 = lift_to_three_dimensions(a2);
    ASSERT_EQ(a3.grid, TorusGrid(3, 4));
    for (std::size_t x = 0; x < a3.grid.size(); ++x) {
        const auto c = a3.grid.coords(x);
        const std::vector<int> c2{c[0], c[1]};
        EXPECT_EQ(a3(x, 0), a2(g.index(c2), 0));
        EXPECT_EQ(a3(x, 1), a2(g.index(c2), 1));
        EXPECT_EQ(a3(x, 2), 1.0);
    }
}

TEST(DimensionReduction, UnitAndRandomFields) {
    const TorusGrid g(2, 8);
    const auto unit = dimension_reduction_check(CoefficientField(g, 1.0));
    EXPECT_LE(unit.max_discrepancy, 1e-8);
    EXPECT_TRUE(unit.passed);
    for (std::uint64_t s = 0; s < 3; ++s) {
        CounterRng rng(40 + s);
        const auto rep = dimension_reduction_check(sample_field(kTwoPoint, g, rng));
        EXPECT_LE(rep.max_discrepancy, 1e-7);
        EXPECT_TRUE(rep.passed);
        EXPECT_NEAR(rep.mean2, 0.0, 1e-12);
        EXPECT_NEAR(rep.mean3, 0.0, 1e-12);
    }
    EXPECT_THROW(dimension_reduction_check(CoefficientField(TorusGrid(3, 4), 1.0)), std::invalid_argument);
}

TEST(DimensionReduction, ResidualTracksSolverTolerance) {
    const TorusGrid g(2, 8);
    CounterRng rng(91);
    const CoefficientField a2 = sample_field(kTwoPoint, g, rng);
    SolverConfig loose, tight;
    loose.tolerance = 1e-8;
    tight.tolerance = 1e-10;
    const auto r8 = dimension_reduction_check(a2, loose);
    const auto r10 = dimension_reduction_check(a2, tight);
    EXPECT_TRUE(r8.passed);
    EXPECT_TRUE(r10.passed);
    EXPECT_LE(r10.max_discrepancy, r8.max_discrepancy);
    EXPECT_LE(r8.max_discrepancy, 10.0 * 1e-8 * r8.scale);
    EXPECT_LE(r10.max_discrepancy, 10.0 * 1e-10 * r10.scale);
}
