#include "homlab/fit.hpp"

#include <cmath>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

namespace homlab {

std::string RateModelSpec::name() const {
    switch (kind) {
    case RateModel::PurePower: return "pure-power";
    case RateModel::SqrtLog: return "sqrt-log";
    case RateModel::LogPower: return "log-power(" + std::to_string(log_power) + ")";
    }
    return "unknown";
}

double t_quantile_95(std::size_t dof) {
    if (dof == 0) throw std::invalid_argument("t quantile needs at least one degree of freedom");
    boost::math::students_t dist(static_cast<double>(dof));
    return boost::math::quantile(boost::math::complement(dist, 0.025));
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n != y.size()) throw std::invalid_argument("fit_line: size mismatch");
    if (n < 2) throw std::invalid_argument("fit_line: need at least 2 points");
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        mx += x[k];
        my += y[k];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        sxx += (x[k] - mx) * (x[k] - mx);
        sxy += (x[k] - mx) * (y[k] - my);
    }
    if (!(sxx > 0.0)) throw std::invalid_argument("fit_line: abscissae must not all coincide");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    for (std::size_t k = 0; k < n; ++k) {
        const double e = y[k] - f.intercept - f.slope * x[k];
        f.rss += e * e;
    }
    if (n > 2) {
        f.se_slope = std::sqrt(f.rss / static_cast<double>(n - 2) / sxx);
        const double t = t_quantile_95(n - 2);
        f.ci_low = f.slope - t * f.se_slope;
        f.ci_high = f.slope + t * f.se_slope;
    } else {
        f.ci_low = f.ci_high = f.slope;
    }
    return f;
}

RateFit fit_rate(const std::vector<RatePoint>& points, const RateModelSpec& model) {
    if (points.size() < 3) throw std::invalid_argument("fit_rate: need at least 3 points");
    std::vector<double> x, y;
    const double k = model.power();
    for (const auto& p : points) {
        if (!(p.value > 0.0)) throw std::invalid_argument("fit_rate: values must be positive");
        if (!(p.L > 1.0)) throw std::invalid_argument("fit_rate: L must exceed 1");
        x.push_back(std::log(p.L));
        y.push_back(std::log(p.value) - k * std::log(std::log(p.L)));
    }
    const LineFit lf = fit_line(x, y);
    RateFit f;
    f.exponent = lf.slope;
    f.intercept = lf.intercept;
    f.se = lf.se_slope;
    f.ci_low = lf.ci_low;
    f.ci_high = lf.ci_high;
    f.residual = lf.rss;
    f.points = points.size();
    f.model = model;
    return f;
}

double mu_d(int d, double L) {
    if (d < 2) throw std::invalid_argument("mu_d is defined for d >= 2");
    if (!(L >= 2.0)) throw std::invalid_argument("mu_d needs L >= 2");
    return d == 2 ? std::log(L) : 1.0;
}

}  // namespace homlab
