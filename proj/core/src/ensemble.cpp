#include "homlab/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace homlab {

namespace {

void check_lambda(double lambda) {
    if (!(lambda > 0.0 && lambda <= 1.0)) {
        throw std::invalid_argument("ellipticity constant must lie in (0, 1]");
    }
}

}  // namespace

SingleSiteMeasure SingleSiteMeasure::two_point(double p, double lambda) {
    check_lambda(lambda);
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("two-point probability must lie in [0, 1]");
    SingleSiteMeasure m;
    m.kind_ = MeasureKind::TwoPoint;
    m.lambda_ = lambda;
    m.p_ = p;
    return m;
}

SingleSiteMeasure SingleSiteMeasure::uniform(double lambda) {
    check_lambda(lambda);
    SingleSiteMeasure m;
    m.kind_ = MeasureKind::Uniform;
    m.lambda_ = lambda;
    return m;
}

SingleSiteMeasure SingleSiteMeasure::finite_support(double lambda, std::vector<SiteAtom> atoms) {
    check_lambda(lambda);
    if (atoms.empty()) throw std::invalid_argument("finite-support measure needs at least one atom");
    const std::size_t d = atoms.front().diag.size();
    NeumaierSum total;
    for (const auto& at : atoms) {
        if (at.diag.size() != d || d == 0) throw std::invalid_argument("atoms must share a dimension");
        if (at.weight < 0.0) throw std::invalid_argument("atom weights must be nonnegative");
        for (double v : at.diag) {
            if (v < lambda || v > 1.0) throw std::invalid_argument("atom entries must lie in [lambda, 1]");
        }
        total.add(at.weight);
    }
    if (std::abs(total.value() - 1.0) > 1e-12) throw std::invalid_argument("atom weights must sum to 1");
    SingleSiteMeasure m;
    m.kind_ = MeasureKind::FiniteSupport;
    m.lambda_ = lambda;
    m.atoms_ = std::move(atoms);
    return m;
}

SingleSiteMeasure SingleSiteMeasure::point_mass(std::vector<double> diag) {
    if (diag.empty()) throw std::invalid_argument("point mass needs a diagonal");
    const double lambda = *std::min_element(diag.begin(), diag.end());
    return finite_support(lambda, {SiteAtom{std::move(diag), 1.0}});
}

std::vector<SiteAtom> SingleSiteMeasure::site_atoms(int dim) const {
    switch (kind_) {
    case MeasureKind::Uniform:
        throw UnsupportedMeasure("continuous single-site measure has no finite support");
    case MeasureKind::FiniteSupport:
        if (atoms_.front().diag.size() != static_cast<std::size_t>(dim)) {
            throw std::invalid_argument("finite-support atoms do not match the grid dimension");
        }
        return atoms_;
    case MeasureKind::TwoPoint: {
        const std::size_t k = std::size_t{1} << dim;
        std::vector<SiteAtom> out(k);
        for (std::size_t a = 0; a < k; ++a) {
            out[a].diag.resize(static_cast<std::size_t>(dim));
            out[a].weight = 1.0;
            for (int i = 0; i < dim; ++i) {
                // direction 1 is the most significant digit
                const bool upper = (a >> (dim - 1 - i)) & 1U;
                out[a].diag[i] = upper ? 1.0 : lambda_;
                out[a].weight *= upper ? p_ : 1.0 - p_;
            }
        }
        return out;
    }
    }
    return {};
}

void SingleSiteMeasure::sample_site(CounterRng& rng, std::span<double> out) const {
    switch (kind_) {
    case MeasureKind::TwoPoint:
        for (auto& v : out) v = rng.uniform() < p_ ? 1.0 : lambda_;
        return;
    case MeasureKind::Uniform:
        for (auto& v : out) v = lambda_ + (1.0 - lambda_) * rng.uniform();
        return;
    case MeasureKind::FiniteSupport: {
        if (atoms_.front().diag.size() != out.size()) {
            throw std::invalid_argument("finite-support atoms do not match the grid dimension");
        }
        const double u = rng.uniform();
        double acc = 0.0;
        const SiteAtom* pick = &atoms_.back();
        for (const auto& at : atoms_) {
            acc += at.weight;
            if (u < acc) { pick = &at; break; }
        }
        std::copy(pick->diag.begin(), pick->diag.end(), out.begin());
        return;
    }
    }
}

std::string SingleSiteMeasure::describe() const {
    std::ostringstream os;
    switch (kind_) {
    case MeasureKind::TwoPoint: os << "two-point(p=" << p_ << ",lambda=" << lambda_ << ")"; break;
    case MeasureKind::Uniform: os << "uniform(lambda=" << lambda_ << ")"; break;
    case MeasureKind::FiniteSupport:
        os << "finite-support(" << atoms_.size() << " atoms,lambda=" << lambda_ << ")";
        break;
    }
    return os.str();
}

CoefficientField sample_field(const SingleSiteMeasure& beta, const TorusGrid& grid, CounterRng& rng) {
    CoefficientField a(grid);
    const auto d = static_cast<std::size_t>(grid.dim());
    for (std::size_t x = 0; x < grid.size(); ++x) {
        beta.sample_site(rng, std::span<double>(a.diag.data() + x * d, d));
    }
    return a;
}

// -- enumeration --------------------------------------------------------------

Enumeration::Enumeration(const SingleSiteMeasure& beta, const TorusGrid& grid, std::size_t budget)
    : grid_(grid), atoms_(beta.site_atoms(grid.dim())) {
    const std::size_t k = atoms_.size();
    const std::size_t n = grid.size();
    count_ = 1;
    for (std::size_t s = 0; s < n; ++s) {
        if (count_ > budget / k) {
            throw BudgetExceeded("ensemble enumeration exceeds the configured budget of " +
                                 std::to_string(budget) + " configurations");
        }
        count_ *= k;
    }
    if (count_ > budget) throw BudgetExceeded("ensemble enumeration exceeds the configured budget");
    place_.resize(n);
    std::size_t p = 1;
    for (std::size_t s = n; s-- > 0;) {
        place_[s] = p;
        p *= k;
    }
}

CoefficientField Enumeration::field(std::size_t config) const {
    CoefficientField a(grid_);
    const int d = grid_.dim();
    for (std::size_t x = 0; x < grid_.size(); ++x) {
        const auto& at = atoms_[atom_at(config, x)];
        for (int i = 0; i < d; ++i) a(x, i) = at.diag[i];
    }
    return a;
}

double Enumeration::probability(std::size_t config) const {
    double p = 1.0;
    for (std::size_t x = 0; x < grid_.size(); ++x) p *= atoms_[atom_at(config, x)].weight;
    return p;
}

double Enumeration::total_probability() const {
    NeumaierSum s;
    for (std::size_t c = 0; c < count_; ++c) s.add(probability(c));
    return s.value();
}

// -- random variables ---------------------------------------------------------

ConfigTable tabulate(const RandomVariable& zeta, const Enumeration& en) {
    ConfigTable t(en.count());
    for (std::size_t c = 0; c < en.count(); ++c) t[c] = zeta(en.field(c));
    return t;
}

double expectation(const ConfigTable& table, const Enumeration& en) {
    NeumaierSum s;
    for (std::size_t c = 0; c < en.count(); ++c) s.add(en.probability(c) * table[c]);
    return s.value();
}

double expectation(const RandomVariable& zeta, const SingleSiteMeasure& beta, const TorusGrid& grid,
                   std::size_t budget) {
    const Enumeration en(beta, grid, budget);
    return expectation(tabulate(zeta, en), en);
}

McEstimate expectation_mc(const RandomVariable& zeta, const SingleSiteMeasure& beta,
                          const TorusGrid& grid, std::size_t samples, std::uint64_t seed) {
    if (samples < 2) throw std::invalid_argument("Monte-Carlo expectation needs at least 2 samples");
    std::vector<double> values(samples);
    for (std::size_t r = 0; r < samples; ++r) {
        CounterRng rng = realization_stream(seed, r);
        values[r] = zeta(sample_field(beta, grid, rng));
    }
    return summarize(values);
}

ConfigTable conditional_average(const ConfigTable& table, const Enumeration& en, std::size_t y) {
    ConfigTable out(en.count());
    const auto& atoms = en.atoms();
    for (std::size_t c = 0; c < en.count(); ++c) {
        double s = 0.0;
        for (std::size_t k = 0; k < atoms.size(); ++k) s += atoms[k].weight * table[en.with_atom(c, y, k)];
        out[c] = s;
    }
    return out;
}

ConfigTable vertical_derivative(const ConfigTable& table, const Enumeration& en, std::size_t y) {
    ConfigTable avg = conditional_average(table, en, y);
    for (std::size_t c = 0; c < en.count(); ++c) avg[c] = table[c] - avg[c];
    return avg;
}

double vertical_derivative(const RandomVariable& zeta, std::size_t y, const CoefficientField& a,
                           const SingleSiteMeasure& beta, const VerticalOptions& opts) {
    const int d = a.grid.dim();
    CoefficientField work = a;
    const double value = zeta(a);
    if (beta.is_finite()) {
        double avg = 0.0;
        for (const auto& at : beta.site_atoms(d)) {
            for (int i = 0; i < d; ++i) work(y, i) = at.diag[i];
            avg += at.weight * zeta(work);
        }
        return value - avg;
    }
    if (opts.mc_samples == 0) {
        throw UnsupportedMeasure("vertical derivative of a continuous measure requires Monte-Carlo samples");
    }
    CounterRng rng(opts.seed);
    NeumaierSum s;
    std::vector<double> site(static_cast<std::size_t>(d));
    for (std::size_t r = 0; r < opts.mc_samples; ++r) {
        beta.sample_site(rng, site);
        for (int i = 0; i < d; ++i) work(y, i) = site[i];
        s.add(zeta(work));
    }
    return value - s.value() / static_cast<double>(opts.mc_samples);
}

std::vector<double> commutator(const std::vector<double>& F, const Enumeration& en, std::size_t y) {
    const auto d = static_cast<std::size_t>(en.grid().dim());
    if (F.size() != en.count() * d) throw std::invalid_argument("commutator table has wrong size");
    const auto& atoms = en.atoms();
    std::vector<double> out(F.size());
    std::vector<double> avgF(d), avgAF(d);
    for (std::size_t c = 0; c < en.count(); ++c) {
        std::fill(avgF.begin(), avgF.end(), 0.0);
        std::fill(avgAF.begin(), avgAF.end(), 0.0);
        for (std::size_t k = 0; k < atoms.size(); ++k) {
            const std::size_t ck = en.with_atom(c, y, k);
            for (std::size_t i = 0; i < d; ++i) {
                avgF[i] += atoms[k].weight * F[ck * d + i];
                avgAF[i] += atoms[k].weight * atoms[k].diag[i] * F[ck * d + i];
            }
        }
        const auto& here = atoms[en.atom_at(c, y)];
        for (std::size_t i = 0; i < d; ++i) out[c * d + i] = here.diag[i] * avgF[i] - avgAF[i];
    }
    return out;
}

std::vector<double> commutator(const VectorRandomVariable& F, std::size_t y, const CoefficientField& a,
                               const SingleSiteMeasure& beta) {
    if (!beta.is_finite()) throw UnsupportedMeasure("commutator requires a finite single-site measure");
    const int d = a.grid.dim();
    CoefficientField work = a;
    std::vector<double> avgF(static_cast<std::size_t>(d), 0.0), avgAF(static_cast<std::size_t>(d), 0.0);
    for (const auto& at : beta.site_atoms(d)) {
        for (int i = 0; i < d; ++i) work(y, i) = at.diag[i];
        const std::vector<double> v = F(work);
        if (v.size() != static_cast<std::size_t>(d)) throw std::invalid_argument("F must be R^d-valued");
        for (int i = 0; i < d; ++i) {
            avgF[i] += at.weight * v[i];
            avgAF[i] += at.weight * at.diag[i] * v[i];
        }
    }
    std::vector<double> out(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) out[i] = a(y, i) * avgF[i] - avgAF[i];
    return out;
}

CovarianceReport covariance_check(const ConfigTable& zeta, const ConfigTable& zeta_tilde,
                                  const Enumeration& en) {
    const std::size_t n_cfg = en.count();
    const std::size_t n_sites = en.grid().size();
    CovarianceReport rep;

    const double m1 = expectation(zeta, en);
    const double m2 = expectation(zeta_tilde, en);
    ConfigTable z1(n_cfg), z2(n_cfg), prod(n_cfg);
    double amp1 = 0.0, amp2 = 0.0;
    for (std::size_t c = 0; c < n_cfg; ++c) {
        z1[c] = zeta[c] - m1;
        z2[c] = zeta_tilde[c] - m2;
        amp1 = std::max(amp1, std::abs(z1[c]));
        amp2 = std::max(amp2, std::abs(z2[c]));
    }
    rep.scale = std::max({amp1 * amp2, amp1 * amp1, std::numeric_limits<double>::min()});

    for (std::size_t c = 0; c < n_cfg; ++c) prod[c] = z1[c] * z2[c];
    rep.covariance = expectation(prod, en);
    for (std::size_t c = 0; c < n_cfg; ++c) prod[c] = z1[c] * z1[c];
    rep.variance = expectation(prod, en);

    NeumaierSum bound, sg;
    for (std::size_t y = 0; y < n_sites; ++y) {
        const ConfigTable d1 = vertical_derivative(zeta, en, y);
        const ConfigTable d2 = vertical_derivative(zeta_tilde, en, y);
        ConfigTable s1(n_cfg), s2(n_cfg);
        for (std::size_t c = 0; c < n_cfg; ++c) {
            s1[c] = d1[c] * d1[c];
            s2[c] = d2[c] * d2[c];
        }
        const double e1 = expectation(s1, en);
        const double e2 = expectation(s2, en);
        bound.add(std::sqrt(e1) * std::sqrt(e2));
        sg.add(e1);
    }
    rep.covariance_bound = bound.value();
    rep.spectral_gap_bound = sg.value();

    // Martingale decomposition over the enumeration y_1, ..., y_N of sites.
    NeumaierSum mart;
    ConfigTable prev1 = z1, prev2 = z2;
    for (std::size_t n = 0; n < n_sites; ++n) {
        ConfigTable next1 = conditional_average(prev1, en, n);
        ConfigTable next2 = conditional_average(prev2, en, n);
        for (std::size_t c = 0; c < n_cfg; ++c) prod[c] = (next1[c] - prev1[c]) * (next2[c] - prev2[c]);
        mart.add(expectation(prod, en));
        prev1 = std::move(next1);
        prev2 = std::move(next2);
    }
    rep.martingale_sum = mart.value();

    const double tol = 1e-12 * rep.scale;
    rep.martingale_ok = std::abs(rep.martingale_sum - rep.covariance) <= tol;
    rep.covariance_ok = rep.covariance <= rep.covariance_bound + tol;
    rep.spectral_gap_ok = rep.variance <= rep.spectral_gap_bound + tol;
    return rep;
}

CovarianceReport covariance_check(const RandomVariable& zeta, const RandomVariable& zeta_tilde,
                                  const SingleSiteMeasure& beta, const TorusGrid& grid,
                                  std::size_t budget) {
    const Enumeration en(beta, grid, budget);
    return covariance_check(tabulate(zeta, en), tabulate(zeta_tilde, en), en);
}

}  // namespace homlab
