#pragma once

// Run configuration, Monte-Carlo experiments and result persistence.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "homlab/corrector.hpp"
#include "homlab/elliptic.hpp"
#include "homlab/ensemble.hpp"
#include "homlab/fit.hpp"
#include "homlab/green.hpp"
#include "homlab/stats.hpp"

namespace homlab {

inline constexpr const char* kVersion = "0.1.0";

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ExperimentKind {
    TwoscaleRate,
    L2Rate,
    SystematicError,
    CorrectorMoments,
    GreenDecay,
    VerifyIdentities,
};

const char* experiment_name(ExperimentKind k);
ExperimentKind parse_experiment(const std::string& name);

/// Where the fixed a_hom for the rate experiments comes from.
struct ReferenceSpec {
    std::optional<Matrix> matrix;                // given inline
    std::optional<std::filesystem::path> manifest;  // "reference_ahom" of an earlier run
    int side = 0;                                // computed by Monte Carlo at this L
    std::size_t realizations = 0;
    std::optional<std::uint64_t> seed;           // defaults to the run seed
};

struct RunConfig {
    ExperimentKind experiment = ExperimentKind::TwoscaleRate;
    int dim = 2;
    std::vector<int> sides;
    SingleSiteMeasure measure = SingleSiteMeasure::two_point(0.5, 0.25);
    RhsDescriptor rhs;
    std::size_t realizations = 100;
    std::uint64_t seed = 1;
    SolverConfig solver;
    ReferenceSpec reference;
    std::size_t budget = Enumeration::kDefaultBudget;
    std::size_t instances = 50;  // random instances for the algebraic identity suite
    std::vector<int> suite_dims{2, 3};
    std::vector<int> suite_sides{4, 8};
    std::map<std::string, double> acceptance;  // threshold overrides

    double threshold(const std::string& key, double fallback) const;
    void validate() const;
};

/// Parses the JSON run configuration; throws ConfigError with a message
/// naming the offending field.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const RunConfig& cfg);

struct Record {
    int L = 0;
    long realization = -1;  // -1 for per-L or global values
    std::string metric;
    double value = 0.0;
};

struct Aggregate {
    int L = 0;
    std::string metric;
    double value = 0.0;
    double se = 0.0;
    std::size_t count = 0;
};

struct FitRecord {
    std::string name;
    RateFit fit;
};

struct Check {
    std::string name;
    double value = 0.0;
    std::string requirement;
    bool passed = false;
};

struct ExperimentResult {
    ExperimentKind experiment = ExperimentKind::TwoscaleRate;
    int dim = 0;
    std::vector<Record> records;
    std::vector<Aggregate> aggregates;
    std::vector<FitRecord> fits;
    std::vector<Check> checks;
    std::map<std::string, std::string> tables;  // extra CSV files by name
    std::optional<Matrix> reference_ahom;
    std::size_t excluded = 0;
    std::size_t jobs = 0;
    double wall_seconds = 0.0;
    std::size_t max_iterations = 0;
    double max_residual = 0.0;

    bool passed() const;
    const Aggregate* aggregate(int L, const std::string& metric) const;
    const FitRecord* fit(const std::string& name) const;
    const Check* check(const std::string& name) const;
};

/// Stream for realization r at side L of a run with the given master seed.
CounterRng job_stream(std::uint64_t master_seed, int L, std::size_t realization);

/// Resolves the reference a_hom of the configuration.
Matrix resolve_reference(const RunConfig& cfg);

ExperimentResult run_twoscale_rate(const RunConfig& cfg);
ExperimentResult run_l2_rate(const RunConfig& cfg);
ExperimentResult run_systematic_error(const RunConfig& cfg);
ExperimentResult run_corrector_moments(const RunConfig& cfg);
ExperimentResult run_green_decay(const RunConfig& cfg);
/// Algebraic identities on random instances, the exhaustive vertical
/// calculus on the configured tiny tori, and the dimension reduction.
ExperimentResult run_identity_suite(const RunConfig& cfg);

ExperimentResult run_experiment(const RunConfig& cfg);

/// results.csv in long format, byte-reproducible for a fixed config.
std::string results_csv(const ExperimentResult& res);
std::string aggregates_csv(const ExperimentResult& res);
std::string manifest_json(const RunConfig& cfg, const ExperimentResult& res);
std::string summary_text(const RunConfig& cfg, const ExperimentResult& res);

/// Writes results.csv, aggregates.csv, the extra tables, manifest.json and
/// summary.txt into `dir` (created if needed).
void write_outputs(const std::filesystem::path& dir, const RunConfig& cfg, const ExperimentResult& res);

/// Shortest round-trip decimal form.
std::string format_number(double v);

}  // namespace homlab
