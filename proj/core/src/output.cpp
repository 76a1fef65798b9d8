#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "homlab/harness.hpp"

namespace homlab {

namespace {

using json = nlohmann::ordered_json;

json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (int i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (int k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
        rows.push_back(row);
    }
    return rows;
}

// NaN and infinities have no JSON form.
json number_json(double v) {
    if (std::isfinite(v)) return v;
    return format_number(v);
}

void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    os << text;
    if (!os) throw std::runtime_error("write failed for " + p.string());
}

}  // namespace

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string results_csv(const ExperimentResult& res) {
    std::ostringstream os;
    os << "experiment,d,L,realization,metric,value\n";
    const char* name = experiment_name(res.experiment);
    for (const auto& r : res.records) {
        os << name << ',' << res.dim << ',' << r.L << ',';
        if (r.realization >= 0) os << r.realization;
        os << ',' << r.metric << ',' << format_number(r.value) << '\n';
    }
    return os.str();
}

std::string aggregates_csv(const ExperimentResult& res) {
    std::ostringstream os;
    os << "experiment,d,L,metric,value,se,count\n";
    const char* name = experiment_name(res.experiment);
    for (const auto& a : res.aggregates) {
        os << name << ',' << res.dim << ',' << a.L << ',' << a.metric << ',' << format_number(a.value) << ','
           << format_number(a.se) << ',' << a.count << '\n';
    }
    return os.str();
}

std::string manifest_json(const RunConfig& cfg, const ExperimentResult& res) {
    json m;
    m["version"] = kVersion;
    m["experiment"] = experiment_name(res.experiment);
    m["seed"] = cfg.seed;
    m["config"] = json::parse(config_to_json(cfg));
    m["jobs"] = res.jobs;
    m["excluded"] = res.excluded;
    m["wall_seconds"] = res.wall_seconds;
    m["diagnostics"] = {{"max_iterations", res.max_iterations}, {"max_relative_residual", number_json(res.max_residual)}};
    if (res.reference_ahom) m["reference_ahom"] = matrix_json(*res.reference_ahom);
    json fits = json::array();
    for (const auto& f : res.fits) {
        fits.push_back({{"name", f.name},
                        {"model", f.fit.model.name()},
                        {"exponent_L", number_json(f.fit.exponent)},
                        {"exponent_eps", number_json(f.fit.eps_exponent())},
                        {"se", number_json(f.fit.se)},
                        {"ci95", {number_json(f.fit.ci_low), number_json(f.fit.ci_high)}},
                        {"intercept", number_json(f.fit.intercept)},
                        {"rss", number_json(f.fit.residual)},
                        {"points", f.fit.points}});
    }
    m["fits"] = fits;
    json checks = json::array();
    for (const auto& c : res.checks) {
        checks.push_back({{"name", c.name}, {"value", number_json(c.value)}, {"requirement", c.requirement},
                          {"passed", c.passed}});
    }
    m["checks"] = checks;
    m["passed"] = res.passed();
    return m.dump(2) + "\n";
}

std::string summary_text(const RunConfig& cfg, const ExperimentResult& res) {
    std::ostringstream os;
    os << experiment_name(res.experiment) << "  d=" << res.dim << "  seed=" << cfg.seed << "  measure "
       << cfg.measure.describe() << '\n';
    os << "jobs " << res.jobs << ", excluded " << res.excluded << ", max iterations " << res.max_iterations
       << ", max residual " << format_number(res.max_residual) << '\n';
    if (res.reference_ahom) {
        os << "reference a_hom:";
        for (int i = 0; i < res.reference_ahom->rows(); ++i) {
            os << (i ? " ;" : "");
            for (int k = 0; k < res.reference_ahom->cols(); ++k) os << ' ' << format_number((*res.reference_ahom)(i, k));
        }
        os << '\n';
    }
    if (!res.aggregates.empty()) {
        os << "\n  L  metric  value  se  n\n";
        for (const auto& a : res.aggregates)
            os << "  " << a.L << "  " << a.metric << "  " << format_number(a.value) << "  " << format_number(a.se) << "  "
               << a.count << '\n';
    }
    if (!res.fits.empty()) {
        os << "\nfits (slope in log-log coordinates against L or r, 95% CI)\n";
        for (const auto& f : res.fits)
            os << "  " << f.name << "  " << format_number(f.fit.exponent) << "  [" << format_number(f.fit.ci_low) << ", "
               << format_number(f.fit.ci_high) << "]  rss " << format_number(f.fit.residual) << '\n';
    }
    os << "\nchecks\n";
    for (const auto& c : res.checks)
        os << "  " << (c.passed ? "PASS " : "FAIL ") << c.name << "  " << format_number(c.value) << "  (" << c.requirement
           << ")\n";
    os << (res.passed() ? "PASSED" : "FAILED") << '\n';
    return os.str();
}

void write_outputs(const std::filesystem::path& dir, const RunConfig& cfg, const ExperimentResult& res) {
    std::filesystem::create_directories(dir);
    write_file(dir / "results.csv", results_csv(res));
    write_file(dir / "aggregates.csv", aggregates_csv(res));
    for (const auto& [name, text] : res.tables) write_file(dir / name, text);
    write_file(dir / "manifest.json", manifest_json(cfg, res));
    write_file(dir / "summary.txt", summary_text(cfg, res));
}

}  // namespace homlab
