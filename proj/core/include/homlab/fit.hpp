#pragma once

// Rate fitting in log-log coordinates.

#include <string>
#include <vector>

namespace homlab {

enum class RateModel { PurePower, SqrtLog, LogPower };

/// value ~ C L^s (ln L)^k, with k = 0, 1/2 or log_power.
struct RateModelSpec {
    RateModel kind = RateModel::PurePower;
    double log_power = 0.0;  // used by LogPower only

    static RateModelSpec pure() { return {RateModel::PurePower, 0.0}; }
    static RateModelSpec sqrt_log() { return {RateModel::SqrtLog, 0.5}; }
    static RateModelSpec log_power_of(double k) { return {RateModel::LogPower, k}; }
    double power() const { return kind == RateModel::PurePower ? 0.0 : kind == RateModel::SqrtLog ? 0.5 : log_power; }
    std::string name() const;
};

struct RateFit {
    double exponent = 0.0;  // slope in L
    double intercept = 0.0;
    double se = 0.0;
    double ci_low = 0.0, ci_high = 0.0;  // 95 %
    double residual = 0.0;  // residual sum of squares in log coordinates
    std::size_t points = 0;
    RateModelSpec model;

    /// Exponent in eps = 1/L.
    double eps_exponent() const { return -exponent; }
};

struct RatePoint {
    double L = 0.0;
    double value = 0.0;
};

/// Ordinary least squares of log(value / (ln L)^k) against log L.
/// Needs >= 3 points; throws for nonpositive values or L <= 1.
RateFit fit_rate(const std::vector<RatePoint>& points, const RateModelSpec& model = RateModelSpec::pure());

/// Plain OLS line fit with a 95 % t interval for the slope.
struct LineFit {
    double slope = 0.0, intercept = 0.0, se_slope = 0.0, ci_low = 0.0, ci_high = 0.0, rss = 0.0;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

/// Two-sided 95 % Student t quantile for `dof` degrees of freedom.
double t_quantile_95(std::size_t dof);

/// ln L for d = 2, 1 for d > 2.
double mu_d(int d, double L);

}  // namespace homlab
