#pragma once

// Single-site measures, the periodic i.i.d. ensemble built from them, exact
// enumeration on tiny tori, and the discrete vertical-derivative calculus.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "homlab/lattice.hpp"
#include "homlab/rng.hpp"
#include "homlab/stats.hpp"

namespace homlab {

struct BudgetExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UnsupportedMeasure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class MeasureKind { TwoPoint, Uniform, FiniteSupport };

/// One diagonal matrix in the support of a finite single-site measure.
struct SiteAtom {
    std::vector<double> diag;
    double weight = 0.0;
};

class SingleSiteMeasure {
public:
    /// Each diagonal entry independently 1 with probability p, else lambda.
    static SingleSiteMeasure two_point(double p, double lambda);
    /// Each diagonal entry independently uniform on [lambda, 1].
    static SingleSiteMeasure uniform(double lambda);
    static SingleSiteMeasure finite_support(double lambda, std::vector<SiteAtom> atoms);
    static SingleSiteMeasure point_mass(std::vector<double> diag);

    MeasureKind kind() const noexcept { return kind_; }
    double lambda() const noexcept { return lambda_; }
    double p() const noexcept { return p_; }
    bool is_finite() const noexcept { return kind_ != MeasureKind::Uniform; }

    /// Support of the measure on diagonal d x d matrices, in lexicographic
    /// order of (direction, support index). Throws for continuous measures.
    std::vector<SiteAtom> site_atoms(int dim) const;

    /// Draws a(x) into `out` (length d).
    void sample_site(CounterRng& rng, std::span<double> out) const;

    std::string describe() const;

private:
    MeasureKind kind_ = MeasureKind::TwoPoint;
    double lambda_ = 1.0;
    double p_ = 0.5;
    std::vector<SiteAtom> atoms_;
};

/// Independent draw of every site and direction; deterministic in `rng`.
CoefficientField sample_field(const SingleSiteMeasure& beta, const TorusGrid& grid, CounterRng& rng);

/// Exhaustive enumeration of Omega_0^{T_L} for a finite single-site measure.
///
/// Configuration indices are base-K numbers with site 0 as the most
/// significant digit, so increasing index is lexicographic in
/// (site index, direction, support index).
class Enumeration {
public:
    static constexpr std::size_t kDefaultBudget = std::size_t{1} << 20;

    Enumeration(const SingleSiteMeasure& beta, const TorusGrid& grid,
                std::size_t budget = kDefaultBudget);

    const TorusGrid& grid() const noexcept { return grid_; }
    std::size_t count() const noexcept { return count_; }
    std::size_t atom_count() const noexcept { return atoms_.size(); }
    const std::vector<SiteAtom>& atoms() const noexcept { return atoms_; }

    std::size_t atom_at(std::size_t config, std::size_t site) const {
        return (config / place_[site]) % atoms_.size();
    }
    std::size_t with_atom(std::size_t config, std::size_t site, std::size_t atom) const {
        return config - atom_at(config, site) * place_[site] + atom * place_[site];
    }

    CoefficientField field(std::size_t config) const;
    double probability(std::size_t config) const;
    /// Compensated sum of all configuration probabilities.
    double total_probability() const;

    template <class Fn>
    void for_each(Fn&& fn) const {
        for (std::size_t c = 0; c < count_; ++c) fn(field(c), probability(c), c);
    }

private:
    TorusGrid grid_;
    std::vector<SiteAtom> atoms_;
    std::vector<std::size_t> place_;
    std::size_t count_ = 0;
};

/// How an ensemble average is taken: exact enumeration or Monte Carlo.
struct SamplingPlan {
    bool exhaustive = false;
    std::size_t realizations = 100;
    std::uint64_t seed = 1;
    std::size_t budget = Enumeration::kDefaultBudget;

    static SamplingPlan exact(std::size_t budget = Enumeration::kDefaultBudget) {
        return {true, 0, 0, budget};
    }
    static SamplingPlan monte_carlo(std::size_t realizations, std::uint64_t seed) {
        return {false, realizations, seed, Enumeration::kDefaultBudget};
    }
};

using RandomVariable = std::function<double(const CoefficientField&)>;
using VectorRandomVariable = std::function<std::vector<double>(const CoefficientField&)>;

/// Values of a scalar random variable, one per configuration.
using ConfigTable = std::vector<double>;

ConfigTable tabulate(const RandomVariable& zeta, const Enumeration& en);

double expectation(const ConfigTable& table, const Enumeration& en);
double expectation(const RandomVariable& zeta, const SingleSiteMeasure& beta, const TorusGrid& grid,
                   std::size_t budget = Enumeration::kDefaultBudget);
McEstimate expectation_mc(const RandomVariable& zeta, const SingleSiteMeasure& beta,
                          const TorusGrid& grid, std::size_t samples, std::uint64_t seed);

/// Conditional average over re-sampling a(y): <zeta>_y per configuration.
ConfigTable conditional_average(const ConfigTable& table, const Enumeration& en, std::size_t y);
/// d zeta / d y = zeta - <zeta>_y per configuration.
ConfigTable vertical_derivative(const ConfigTable& table, const Enumeration& en, std::size_t y);

struct VerticalOptions {
    /// Monte-Carlo resamples of a(y) for continuous measures; 0 = refuse.
    std::size_t mc_samples = 0;
    std::uint64_t seed = 0;
};

double vertical_derivative(const RandomVariable& zeta, std::size_t y, const CoefficientField& a,
                           const SingleSiteMeasure& beta, const VerticalOptions& opts = {});

/// [F]_y = a(y) <F>_y - <a(y) F>_y for an R^d-valued F, tabulated as
/// count * d values (component fastest).
std::vector<double> commutator(const std::vector<double>& F, const Enumeration& en, std::size_t y);

std::vector<double> commutator(const VectorRandomVariable& F, std::size_t y, const CoefficientField& a,
                               const SingleSiteMeasure& beta);

struct CovarianceReport {
    double covariance = 0.0;
    double covariance_bound = 0.0;  // sum_y <(d zeta/dy)^2>^1/2 <(d zeta~/dy)^2>^1/2
    double martingale_sum = 0.0;    // sum_n <(zeta_n - zeta_{n-1})(zeta~_n - zeta~_{n-1})>
    double variance = 0.0;          // Var(zeta)
    double spectral_gap_bound = 0.0;  // <sum_y (d zeta/dy)^2>
    double scale = 0.0;
    bool martingale_ok = false;
    bool covariance_ok = false;
    bool spectral_gap_ok = false;

    bool passed() const noexcept { return martingale_ok && covariance_ok && spectral_gap_ok; }
};

CovarianceReport covariance_check(const ConfigTable& zeta, const ConfigTable& zeta_tilde,
                                  const Enumeration& en);
CovarianceReport covariance_check(const RandomVariable& zeta, const RandomVariable& zeta_tilde,
                                  const SingleSiteMeasure& beta, const TorusGrid& grid,
                                  std::size_t budget = Enumeration::kDefaultBudget);

}  // namespace homlab
