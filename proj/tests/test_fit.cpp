#include <cmath>

#include <gtest/gtest.h>

#include "homlab/fit.hpp"

using namespace homlab;

namespace {

std::vector<RatePoint> points(const std::vector<double>& Ls, double (*f)(double)) {
    std::vector<RatePoint> p;
    for (double L : Ls) p.push_back({L, f(L)});
    return p;
}

const std::vector<double> kSides{8, 16, 32, 64, 128};

}  // namespace

TEST(FitRate, ExactPowerLaw) {
    const RateFit f = fit_rate(points(kSides, [](double L) { return 3.0 / L; }));
    EXPECT_NEAR(f.exponent, -1.0, 1e-10);
    EXPECT_NEAR(f.eps_exponent(), 1.0, 1e-10);
    EXPECT_NEAR(std::exp(f.intercept), 3.0, 1e-9);
    EXPECT_LE(f.residual, 1e-20);
    EXPECT_EQ(f.points, kSides.size());
}

TEST(FitRate, SqrtLogDataUnderPureAndCorrectedModels) {
    const auto p = points(kSides, [](double L) { return std::sqrt(std::log(L)) / L; });
    const RateFit pure = fit_rate(p);
    // the log factor grows, so the apparent decay is slower than 1/L
    EXPECT_GT(pure.exponent, -1.0);
    EXPECT_LT(pure.exponent, -0.8);
    const RateFit corrected = fit_rate(p, RateModelSpec::sqrt_log());
    EXPECT_NEAR(corrected.exponent, -1.0, 1e-10);
    EXPECT_LT(corrected.residual, pure.residual);
}

TEST(FitRate, LogPowerModel) {
    const auto p = points(kSides, [](double L) { return std::pow(std::log(L), 2.0) / (L * L); });
    EXPECT_NEAR(fit_rate(p, RateModelSpec::log_power_of(2.0)).exponent, -2.0, 1e-10);
    EXPECT_EQ(RateModelSpec::log_power_of(2.0).power(), 2.0);
    EXPECT_EQ(RateModelSpec::sqrt_log().power(), 0.5);
}

TEST(FitRate, ConstantDataHasZeroSlope) {
    const RateFit f = fit_rate(points(kSides, [](double) { return 0.7; }));
    EXPECT_NEAR(f.exponent, 0.0, 1e-12);
    EXPECT_NEAR(f.se, 0.0, 1e-12);
}

TEST(FitRate, RejectsBadInput) {
    EXPECT_THROW(fit_rate({{8, 1.0}, {16, 0.5}}), std::invalid_argument);
    EXPECT_THROW(fit_rate({{8, 1.0}, {16, 0.0}, {32, 0.2}}), std::invalid_argument);
    EXPECT_THROW(fit_rate({{8, 1.0}, {16, -1.0}, {32, 0.2}}), std::invalid_argument);
    EXPECT_THROW(fit_rate({{1, 1.0}, {16, 0.5}, {32, 0.2}}), std::invalid_argument);
}

TEST(FitLine, InterceptSlopeAndInterval) {
    const std::vector<double> x{0, 1, 2, 3, 4};
    const std::vector<double> y{1.1, 2.9, 5.2, 6.8, 9.0};
    const LineFit f = fit_line(x, y);
    // closed-form OLS
    const double xm = 2.0, ym = 5.0;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - xm) * (y[i] - ym);
        sxx += (x[i] - xm) * (x[i] - xm);
    }
    EXPECT_NEAR(f.slope, sxy / sxx, 1e-12);
    EXPECT_NEAR(f.intercept, ym - f.slope * xm, 1e-12);
    double rss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) rss += std::pow(y[i] - f.intercept - f.slope * x[i], 2);
    EXPECT_NEAR(f.rss, rss, 1e-12);
    EXPECT_NEAR(f.se_slope, std::sqrt(rss / 3.0 / sxx), 1e-12);
    EXPECT_NEAR(f.ci_high - f.slope, 3.182446305284263 * f.se_slope, 1e-9);
    EXPECT_NEAR(f.slope - f.ci_low, f.ci_high - f.slope, 1e-12);
    EXPECT_THROW(fit_line({1, 2}, {1}), std::invalid_argument);
}

TEST(FitLine, StudentQuantiles) {
    EXPECT_NEAR(t_quantile_95(1), 12.706204736174707, 1e-9);
    EXPECT_NEAR(t_quantile_95(10), 2.2281388519649385, 1e-9);
    EXPECT_NEAR(t_quantile_95(1000000), 1.959966, 1e-5);
}

TEST(MuD, Examples) {
    EXPECT_DOUBLE_EQ(mu_d(2, 8.0), std::log(8.0));
    EXPECT_DOUBLE_EQ(mu_d(3, 8.0), 1.0);
    EXPECT_DOUBLE_EQ(mu_d(2, 2.0), std::log(2.0));
    EXPECT_THROW(mu_d(1, 8.0), std::invalid_argument);
}
