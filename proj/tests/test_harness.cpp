#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "homlab/harness.hpp"

using namespace homlab;

namespace {

const char* kSmallRate = R"({
  "experiment": "twoscale-rate", "d": 2, "L": [4, 6, 8],
  "measure": {"kind": "two-point", "p": 0.5, "lambda": 0.25},
  "realizations": 4, "seed": 17,
  "reference": {"L": 8, "realizations": 4}
})";

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::filesystem::path scratch(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("homlab_test_" + name);
    std::filesystem::remove_all(p);
    return p;
}

}  // namespace

TEST(Config, ParsesAndFillsDefaults) {
    const RunConfig cfg = parse_config(kSmallRate);
    EXPECT_EQ(cfg.experiment, ExperimentKind::TwoscaleRate);
    EXPECT_EQ(cfg.dim, 2);
    EXPECT_EQ(cfg.sides, (std::vector<int>{4, 6, 8}));
    EXPECT_EQ(cfg.realizations, 4u);
    EXPECT_EQ(cfg.seed, 17u);
    EXPECT_EQ(cfg.reference.side, 8);
    EXPECT_FALSE(cfg.reference.seed.has_value());
    EXPECT_EQ(cfg.solver.tolerance, 1e-10);
}

TEST(Config, RejectsMalformedInput) {
    EXPECT_THROW(parse_config("{"), ConfigError);
    EXPECT_THROW(parse_config("[]"), ConfigError);
    EXPECT_THROW(parse_config(R"({"experiment": "twoscale-rate", "d": 2, "L": [4, 8], "bogus": 1})"), ConfigError);
    EXPECT_THROW(parse_config(R"({"experiment": "twoscale-rate", "d": 2, "L": [8, 4]})"), ConfigError);
    EXPECT_THROW(parse_config(R"({"experiment": "twoscale-rate", "d": 2, "L": [4, 4]})"), ConfigError);
    EXPECT_THROW(parse_config(R"({"experiment": "twoscale-rate", "d": 2, "L": [4, 8], "realizations": 1})"),
                 ConfigError);
    EXPECT_THROW(parse_config(R"({"experiment": "nonsense", "d": 2, "L": [4]})"), ConfigError);
    EXPECT_THROW(parse_config(R"({"experiment": "twoscale-rate", "d": 1, "L": [4, 8]})"), ConfigError);
    EXPECT_THROW(parse_config(R"({"experiment": "twoscale-rate", "L": [4, 8]})"), ConfigError);
    EXPECT_THROW(parse_config(R"({"experiment": "twoscale-rate", "d": 2, "L": [4, 8],
                                  "measure": {"kind": "two-point", "p": 1.5}})"),
                 ConfigError);
    EXPECT_THROW(parse_config(R"({"experiment": "twoscale-rate", "d": 2, "L": [4, 8],
                                  "reference": {"matrix": [[1, 0, 0]]}})"),
                 ConfigError);
    EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, JsonRoundTrip) {
    const RunConfig cfg = parse_config(R"({
      "experiment": "green-decay", "d": 3, "L": [16, 32],
      "measure": {"kind": "uniform", "lambda": 0.3},
      "rhs": {"constant": 0, "terms": [{"amplitude": 2, "fn": "sin", "k": [1, 0, 1]}]},
      "realizations": 7, "seed": 99,
      "solver": {"tolerance": 1e-9, "preconditioner": "none"},
      "reference": {"matrix": [[1, 0, 0], [0, 2, 0], [0, 0, 3]], "seed": 5},
      "acceptance": {"mixed_gap": 0.25}
    })");
    const std::string once = config_to_json(cfg);
    const RunConfig again = parse_config(once);
    EXPECT_EQ(config_to_json(again), once);
    EXPECT_EQ(again.threshold("mixed_gap", 0.5), 0.25);
    EXPECT_EQ(again.threshold("other", 0.5), 0.5);
    EXPECT_EQ(again.solver.preconditioner, Preconditioner::None);
    ASSERT_TRUE(again.reference.matrix.has_value());
    EXPECT_EQ((*again.reference.matrix)(2, 2), 3.0);
}

TEST(Streams, DistinctPerSideAndRealization) {
    EXPECT_NE(job_stream(1, 8, 0)(), job_stream(1, 16, 0)());
    EXPECT_NE(job_stream(1, 8, 0)(), job_stream(1, 8, 1)());
    EXPECT_NE(job_stream(1, 8, 0)(), job_stream(2, 8, 0)());
    EXPECT_EQ(job_stream(1, 8, 3)(), job_stream(1, 8, 3)());
}

TEST(Output, FormatNumberRoundTrips) {
    for (double v : {0.0, 1.0, -2.5, 0.1, 1.0 / 3.0, 6.02214076e23, 1e-300}) {
        const std::string s = format_number(v);
        EXPECT_EQ(std::stod(s), v) << s;
    }
    EXPECT_EQ(format_number(0.5), "0.5");
    EXPECT_EQ(format_number(std::nan("")), "nan");
    EXPECT_EQ(format_number(-INFINITY), "-inf");
}

TEST(Experiments, RepeatedRunsAreByteIdentical) {
    const RunConfig cfg = parse_config(kSmallRate);
    const ExperimentResult a = run_experiment(cfg), b = run_experiment(cfg);
    EXPECT_EQ(results_csv(a), results_csv(b));
    EXPECT_EQ(aggregates_csv(a), aggregates_csv(b));
    RunConfig other = cfg;
    other.seed = 18;
    EXPECT_NE(results_csv(run_experiment(other)), results_csv(a));
}

TEST(Experiments, AggregatesMatchRecordsAndCsvLayout) {
    const RunConfig cfg = parse_config(kSmallRate);
    const ExperimentResult res = run_experiment(cfg);
    const std::string csv = results_csv(res);
    std::stringstream ss(csv);
    std::string line;
    std::getline(ss, line);
    EXPECT_EQ(line, "experiment,d,L,realization,metric,value");
    std::map<int, std::vector<double>> h1;
    while (std::getline(ss, line)) {
        const auto cells = split(line);
        ASSERT_EQ(cells.size(), 6u) << line;
        EXPECT_EQ(cells[0], "twoscale-rate");
        if (cells[4] == "z_h1_eps") h1[std::stoi(cells[2])].push_back(std::stod(cells[5]));
    }
    ASSERT_EQ(h1.size(), 3u);
    for (const auto& [L, v] : h1) {
        ASSERT_EQ(v.size(), 4u);
        // independent recomputation of the RMS and its delta-method SE
        double m = 0.0;
        for (double x : v) m += x * x;
        m /= 4.0;
        double var = 0.0;
        for (double x : v) var += (x * x - m) * (x * x - m);
        var /= 3.0;
        const double se_m = std::sqrt(var / 4.0);
        const Aggregate* agg = res.aggregate(L, "z_h1_eps");
        ASSERT_NE(agg, nullptr);
        EXPECT_NEAR(agg->value, std::sqrt(m), 1e-12 * std::sqrt(m));
        EXPECT_NEAR(agg->se, se_m / (2.0 * std::sqrt(m)), 1e-10 * agg->se + 1e-300);
        EXPECT_EQ(agg->count, 4u);
    }
    EXPECT_NE(res.fit("z_h1_eps/pure"), nullptr);
    EXPECT_EQ(res.jobs, 12u);
}

TEST(Experiments, PointMassRateVanishes) {
    RunConfig cfg = parse_config(R"({"experiment": "twoscale-rate", "d": 2, "L": [8, 16, 32],
        "measure": {"kind": "point-mass", "diag": [1, 1]}, "realizations": 2, "seed": 3})");
    const ExperimentResult res = run_experiment(cfg);
    EXPECT_TRUE(res.passed());
    const Check* c = res.check("errors_vanish");
    ASSERT_NE(c, nullptr);
    EXPECT_TRUE(c->passed);
    for (int L : cfg.sides) EXPECT_LE(res.aggregate(L, "z_h1_eps")->value, 1e-8);
    ASSERT_TRUE(res.reference_ahom.has_value());
    EXPECT_NEAR((*res.reference_ahom - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 0.0, 1e-12);
}

TEST(Experiments, ReferenceFromManifestAndInline) {
    const auto dir = scratch("ref");
    RunConfig cfg = parse_config(kSmallRate);
    const ExperimentResult res = run_experiment(cfg);
    write_outputs(dir, cfg, res);
    for (const char* f : {"results.csv", "aggregates.csv", "manifest.json", "summary.txt"})
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;

    RunConfig from_manifest = cfg;
    from_manifest.reference = {};
    from_manifest.reference.manifest = dir / "manifest.json";
    const Matrix m = resolve_reference(from_manifest);
    ASSERT_TRUE(res.reference_ahom.has_value());
    EXPECT_NEAR((m - *res.reference_ahom).cwiseAbs().maxCoeff(), 0.0, 1e-15);

    RunConfig inline_ref = cfg;
    inline_ref.reference = {};
    inline_ref.reference.matrix = 0.4 * Matrix::Identity(2, 2);
    EXPECT_EQ(resolve_reference(inline_ref)(1, 1), 0.4);

    RunConfig none = cfg;
    none.reference = {};
    EXPECT_THROW(resolve_reference(none), ConfigError);
    std::filesystem::remove_all(dir);
}

TEST(Experiments, IdentitySuiteSmall) {
    const RunConfig cfg = parse_config(R"({"experiment": "verify-identities", "d": 1, "L": [2],
        "instances": 3, "suite": {"d": [2], "L": [4]}, "seed": 2})");
    const ExperimentResult res = run_experiment(cfg);
    EXPECT_TRUE(res.passed());
    ASSERT_EQ(res.tables.count("identities.csv"), 1u);
    EXPECT_EQ(res.tables.at("identities.csv").rfind("identity,d,L,measure,max_discrepancy,threshold,pass", 0), 0u);
}

TEST(Experiments, SystematicErrorNeedsLargerReference) {
    RunConfig cfg = parse_config(R"({"experiment": "systematic-error", "d": 2, "L": [4, 8, 16],
        "realizations": 4, "reference": {"L": 16, "realizations": 4}})");
    EXPECT_THROW(run_experiment(cfg), ConfigError);
}
