// homlab command line driver.
//
//   homlab <subcommand> [config.json] [--seed N] [--L 8,16,32] [--realizations N] [--out DIR]
//
// Exit status: 0 when every acceptance check passes, 2 when a check fails,
// 1 on errors (bad config, unwritable output, solver breakdown).

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "homlab/field_io.hpp"
#include "homlab/harness.hpp"

namespace {

using namespace homlab;

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::vector<int> sides;
    std::optional<std::size_t> realizations;
    std::string out;
};

void add_common(CLI::App* sub, Overrides& o, bool config_required) {
    auto* c = sub->add_option("config", o.config, "JSON run configuration");
    if (config_required) c->required();
    c->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--L", o.sides, "side lengths, e.g. --L 8,16,32")->delimiter(',');
    sub->add_option("--realizations", o.realizations, "realizations per L");
    sub->add_option("--out", o.out, "output directory");
}

RunConfig default_verify_config() {
    RunConfig cfg;
    cfg.experiment = ExperimentKind::VerifyIdentities;
    cfg.dim = 2;
    cfg.sides = {2};
    cfg.rhs = RhsDescriptor::named("default", 2);
    cfg.realizations = 0;
    return cfg;
}

RunConfig resolve(const Overrides& o, std::optional<ExperimentKind> force) {
    RunConfig cfg = o.config.empty() ? default_verify_config() : load_config(o.config);
    if (force) cfg.experiment = *force;
    if (o.seed) cfg.seed = *o.seed;
    if (!o.sides.empty()) cfg.sides = o.sides;
    if (o.realizations) cfg.realizations = *o.realizations;
    cfg.validate();
    return cfg;
}

std::filesystem::path out_dir(const Overrides& o, const std::string& sub) {
    return o.out.empty() ? std::filesystem::path("out") / sub : std::filesystem::path(o.out);
}

// -- single-realization subcommands ----------------------------------------------

ExperimentResult sample_fields(const RunConfig& cfg, const std::filesystem::path& dir) {
    ExperimentResult res;
    res.experiment = cfg.experiment;
    res.dim = cfg.dim;
    std::filesystem::create_directories(dir);
    for (int L : cfg.sides) {
        CounterRng rng = job_stream(cfg.seed, L, 0);
        const CoefficientField a = sample_field(cfg.measure, TorusGrid(cfg.dim, L), rng);
        save_field(dir / ("field_L" + std::to_string(L) + ".csv"), to_record(a));
        const auto am = a.arithmetic_mean(), hm = a.harmonic_mean();
        for (int i = 0; i < cfg.dim; ++i) {
            res.records.push_back({L, 0, "arithmetic_mean_" + std::to_string(i + 1), am[i]});
            res.records.push_back({L, 0, "harmonic_mean_" + std::to_string(i + 1), hm[i]});
        }
        res.records.push_back({L, 0, "min_entry", a.min_entry()});
        res.records.push_back({L, 0, "max_entry", a.max_entry()});
        ++res.jobs;
    }
    return res;
}

ExperimentResult corrector_fields(const RunConfig& cfg, const std::filesystem::path& dir) {
    ExperimentResult res;
    res.experiment = cfg.experiment;
    res.dim = cfg.dim;
    std::filesystem::create_directories(dir);
    bool all_converged = true;
    for (int L : cfg.sides) {
        CounterRng rng = job_stream(cfg.seed, L, 0);
        const CoefficientField a = sample_field(cfg.measure, TorusGrid(cfg.dim, L), rng);
        const CorrectorSet cs = solve_correctors(a, cfg.solver);
        for (int j = 0; j < cfg.dim; ++j) {
            const std::string tag = std::to_string(j + 1);
            save_field(dir / ("phi" + tag + "_L" + std::to_string(L) + ".csv"), to_record(cs.phi[j]));
            res.records.push_back({L, 0, "iterations_" + tag, static_cast<double>(cs.diagnostics[j].iterations)});
            res.records.push_back({L, 0, "residual_" + tag, cs.diagnostics[j].residual});
            res.max_iterations = std::max(res.max_iterations, cs.diagnostics[j].iterations);
            res.max_residual = std::max(res.max_residual, cs.diagnostics[j].residual);
        }
        const CorrectorMomentSample m = corrector_moment_sample(cs);
        res.records.push_back({L, 0, "phi2", m.phi2});
        res.records.push_back({L, 0, "grad4", m.grad4});
        const Matrix B = ahom_L(a, cs).symmetric;
        for (int i = 0; i < cfg.dim; ++i)
            for (int k = i; k < cfg.dim; ++k)
                res.records.push_back({L, 0, "ahom_" + std::to_string(i + 1) + std::to_string(k + 1), B(i, k)});
        all_converged = all_converged && cs.converged();
        ++res.jobs;
    }
    res.checks.push_back({"solver_converged", all_converged ? 1.0 : 0.0, "all corrector solves converge", all_converged});
    return res;
}

ExperimentResult ahom_runs(const RunConfig& cfg, bool exact) {
    ExperimentResult res;
    res.experiment = cfg.experiment;
    res.dim = cfg.dim;
    const int d = cfg.dim;
    for (int L : cfg.sides) {
        const SamplingPlan plan = exact ? SamplingPlan::exact(cfg.budget)
                                        : SamplingPlan::monte_carlo(cfg.realizations, side_seed(cfg.seed, L));
        const EnsembleHomogenized ens = ahom_L_ensemble(cfg.measure, TorusGrid(d, L), plan, cfg.solver);
        for (std::size_t r = 0; r < ens.samples.size(); ++r)
            res.records.push_back({L, static_cast<long>(r), "ahom_trace_over_d", ens.samples[r].trace() / d});
        for (int i = 0; i < d; ++i)
            for (int k = i; k < d; ++k)
                res.aggregates.push_back(
                    {L, "ahom_" + std::to_string(i + 1) + std::to_string(k + 1), ens.mean(i, k), ens.se(i, k), ens.count});
        res.records.push_back({L, -1, "max_asymmetry", ens.max_asymmetry});
        res.jobs += ens.count;
        res.reference_ahom = ens.mean;
    }
    return res;
}

int finish(const std::filesystem::path& dir, const RunConfig& cfg, const ExperimentResult& res, bool print_tables) {
    write_outputs(dir, cfg, res);
    std::cout << summary_text(cfg, res);
    if (print_tables)
        for (const auto& [name, text] : res.tables) std::cout << '\n' << name << '\n' << text;
    std::cout << "outputs in " << dir.string() << '\n';
    return res.passed() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Discrete stochastic homogenization experiments", "homlab"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    Overrides o;
    bool exact = false;
    auto* sample = app.add_subcommand("sample", "sample coefficient fields and write them out");
    auto* corrector = app.add_subcommand("corrector", "solve the correctors for one realization per L");
    auto* ahom = app.add_subcommand("ahom", "ensemble estimate of a_hom,L");
    auto* green = app.add_subcommand("green-stats", "Green function decay statistics");
    auto* twoscale = app.add_subcommand("twoscale", "two-scale expansion error rate");
    auto* rate = app.add_subcommand("rate", "run the experiment named in the config");
    auto* verify = app.add_subcommand("verify", "exact identity suites (default: d=2, L=2 tiny torus)");
    for (auto* s : {sample, corrector, ahom, green, twoscale, rate}) add_common(s, o, true);
    add_common(verify, o, false);
    ahom->add_flag("--exact", exact, "enumerate every configuration instead of sampling");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (sample->parsed()) {
            const RunConfig cfg = resolve(o, std::nullopt);
            return finish(out_dir(o, "sample"), cfg, sample_fields(cfg, out_dir(o, "sample")), false);
        }
        if (corrector->parsed()) {
            const RunConfig cfg = resolve(o, std::nullopt);
            return finish(out_dir(o, "corrector"), cfg, corrector_fields(cfg, out_dir(o, "corrector")), false);
        }
        if (ahom->parsed()) {
            const RunConfig cfg = resolve(o, std::nullopt);
            return finish(out_dir(o, "ahom"), cfg, ahom_runs(cfg, exact), false);
        }
        if (green->parsed()) {
            const RunConfig cfg = resolve(o, ExperimentKind::GreenDecay);
            return finish(out_dir(o, "green-stats"), cfg, run_experiment(cfg), false);
        }
        if (twoscale->parsed()) {
            const RunConfig cfg = resolve(o, ExperimentKind::TwoscaleRate);
            return finish(out_dir(o, "twoscale"), cfg, run_experiment(cfg), false);
        }
        if (rate->parsed()) {
            const RunConfig cfg = resolve(o, std::nullopt);
            return finish(out_dir(o, "rate"), cfg, run_experiment(cfg), false);
        }
        if (verify->parsed()) {
            const RunConfig cfg = resolve(o, ExperimentKind::VerifyIdentities);
            return finish(out_dir(o, "verify"), cfg, run_experiment(cfg), true);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
