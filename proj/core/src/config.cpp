#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "homlab/harness.hpp"

namespace homlab {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
}

template <class T>
T get_as(const json& j, const std::string& where) {
    try {
        return j.get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("bad value for " + where + ": " + e.what());
    }
}

SingleSiteMeasure parse_measure(const json& j, int dim) {
    if (!j.is_object()) throw ConfigError("measure must be an object");
    const auto kind = get_as<std::string>(j.value("kind", json("two-point")), "measure.kind");
    try {
        if (kind == "two-point") {
            reject_unknown(j, {"kind", "p", "lambda"}, "measure");
            return SingleSiteMeasure::two_point(j.value("p", 0.5), j.value("lambda", 0.25));
        }
        if (kind == "uniform") {
            reject_unknown(j, {"kind", "lambda"}, "measure");
            return SingleSiteMeasure::uniform(j.value("lambda", 0.25));
        }
        if (kind == "point-mass") {
            reject_unknown(j, {"kind", "diag"}, "measure");
            std::vector<double> diag = j.contains("diag") ? get_as<std::vector<double>>(j["diag"], "measure.diag")
                                                          : std::vector<double>(static_cast<std::size_t>(dim), 1.0);
            return SingleSiteMeasure::point_mass(std::move(diag));
        }
        if (kind == "finite-support") {
            reject_unknown(j, {"kind", "lambda", "atoms"}, "measure");
            std::vector<SiteAtom> atoms;
            for (const auto& a : j.at("atoms")) {
                atoms.push_back({get_as<std::vector<double>>(a.at("diag"), "measure.atoms.diag"),
                                 get_as<double>(a.at("weight"), "measure.atoms.weight")});
            }
            return SingleSiteMeasure::finite_support(j.value("lambda", 0.25), std::move(atoms));
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("invalid measure: ") + e.what());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid measure: ") + e.what());
    }
    throw ConfigError("unknown measure kind '" + kind + "'");
}

json measure_to_json(const SingleSiteMeasure& m, int dim) {
    switch (m.kind()) {
    case MeasureKind::TwoPoint: return {{"kind", "two-point"}, {"p", m.p()}, {"lambda", m.lambda()}};
    case MeasureKind::Uniform: return {{"kind", "uniform"}, {"lambda", m.lambda()}};
    case MeasureKind::FiniteSupport: {
        json atoms = json::array();
        for (const auto& a : m.site_atoms(dim)) atoms.push_back({{"diag", a.diag}, {"weight", a.weight}});
        return {{"kind", "finite-support"}, {"lambda", m.lambda()}, {"atoms", atoms}};
    }
    }
    return {};
}

RhsDescriptor parse_rhs(const json& j, int dim) {
    try {
        if (j.is_string()) return RhsDescriptor::named(j.get<std::string>(), dim);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (!j.is_object()) throw ConfigError("rhs must be a name or an object");
    reject_unknown(j, {"constant", "terms"}, "rhs");
    RhsDescriptor f;
    f.constant = j.value("constant", 0.0);
    for (const auto& t : j.value("terms", json::array())) {
        reject_unknown(t, {"amplitude", "fn", "k"}, "rhs.terms");
        TrigTerm term;
        term.amplitude = t.value("amplitude", 1.0);
        const auto fn = t.value("fn", std::string("cos"));
        if (fn != "cos" && fn != "sin") throw ConfigError("rhs term fn must be cos or sin");
        term.sine = fn == "sin";
        term.k = get_as<std::vector<int>>(t.at("k"), "rhs.terms.k");
        if (term.k.size() != static_cast<std::size_t>(dim)) throw ConfigError("rhs frequency has wrong dimension");
        f.terms.push_back(std::move(term));
    }
    return f;
}

json rhs_to_json(const RhsDescriptor& f) {
    json terms = json::array();
    for (const auto& t : f.terms) {
        terms.push_back({{"amplitude", t.amplitude}, {"fn", t.sine ? "sin" : "cos"}, {"k", t.k}});
    }
    return {{"constant", f.constant}, {"terms", terms}};
}

Matrix parse_matrix(const json& j, int dim) {
    const auto rows = get_as<std::vector<std::vector<double>>>(j, "reference.matrix");
    if (rows.size() != static_cast<std::size_t>(dim)) throw ConfigError("reference matrix must be d x d");
    Matrix m(dim, dim);
    for (int i = 0; i < dim; ++i) {
        if (rows[i].size() != static_cast<std::size_t>(dim)) throw ConfigError("reference matrix must be d x d");
        for (int k = 0; k < dim; ++k) m(i, k) = rows[i][k];
    }
    return m;
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
        rows.push_back(row);
    }
    return rows;
}

}  // namespace

const char* experiment_name(ExperimentKind k) {
    switch (k) {
    case ExperimentKind::TwoscaleRate: return "twoscale-rate";
    case ExperimentKind::L2Rate: return "l2-rate";
    case ExperimentKind::SystematicError: return "systematic-error";
    case ExperimentKind::CorrectorMoments: return "corrector-moments";
    case ExperimentKind::GreenDecay: return "green-decay";
    case ExperimentKind::VerifyIdentities: return "verify-identities";
    }
    return "unknown";
}

ExperimentKind parse_experiment(const std::string& name) {
    for (auto k : {ExperimentKind::TwoscaleRate, ExperimentKind::L2Rate, ExperimentKind::SystematicError,
                   ExperimentKind::CorrectorMoments, ExperimentKind::GreenDecay, ExperimentKind::VerifyIdentities}) {
        if (name == experiment_name(k)) return k;
    }
    throw ConfigError("unknown experiment '" + name + "'");
}

double RunConfig::threshold(const std::string& key, double fallback) const {
    const auto it = acceptance.find(key);
    return it == acceptance.end() ? fallback : it->second;
}

void RunConfig::validate() const {
    if (dim < 1) throw ConfigError("d must be >= 1");
    const bool rate = experiment == ExperimentKind::TwoscaleRate || experiment == ExperimentKind::L2Rate ||
                         experiment == ExperimentKind::SystematicError;
    if (rate && dim < 2) throw ConfigError("rate experiments need d >= 2");
    if (sides.empty()) throw ConfigError("L list must not be empty");
    for (std::size_t k = 0; k < sides.size(); ++k) {
        if (sides[k] < 2) throw ConfigError("every L must be >= 2");
        if (k > 0 && sides[k] <= sides[k - 1]) throw ConfigError("L values must be strictly increasing");
    }
    if (experiment != ExperimentKind::VerifyIdentities && realizations < 2) {
        throw ConfigError("Monte-Carlo experiments need at least 2 realizations");
    }
    if (!(solver.tolerance > 0.0)) throw ConfigError("solver tolerance must be positive");
    if (reference.side != 0 && reference.side < 2) throw ConfigError("reference L must be >= 2");
}

RunConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    reject_unknown(j, {"experiment", "d", "L", "measure", "rhs", "realizations", "seed", "solver", "reference",
                       "budget", "instances", "suite", "acceptance", "description"},
                   "config");

    RunConfig cfg;
    if (!j.contains("experiment")) throw ConfigError("config needs an 'experiment'");
    cfg.experiment = parse_experiment(get_as<std::string>(j["experiment"], "experiment"));
    if (!j.contains("d")) throw ConfigError("config needs 'd'");
    cfg.dim = get_as<int>(j["d"], "d");
    if (!j.contains("L")) throw ConfigError("config needs an 'L' list");
    cfg.sides = j["L"].is_array() ? get_as<std::vector<int>>(j["L"], "L") : std::vector<int>{get_as<int>(j["L"], "L")};
    cfg.measure = j.contains("measure") ? parse_measure(j["measure"], cfg.dim) : SingleSiteMeasure::two_point(0.5, 0.25);
    cfg.rhs = parse_rhs(j.value("rhs", json("default")), cfg.dim);
    cfg.realizations = get_as<std::size_t>(j.value("realizations", json(100)), "realizations");
    cfg.seed = get_as<std::uint64_t>(j.value("seed", json(1)), "seed");
    cfg.budget = get_as<std::size_t>(j.value("budget", json(Enumeration::kDefaultBudget)), "budget");
    cfg.instances = get_as<std::size_t>(j.value("instances", json(50)), "instances");

    if (j.contains("suite")) {
        const json& s = j["suite"];
        reject_unknown(s, {"d", "L"}, "suite");
        if (s.contains("d")) cfg.suite_dims = get_as<std::vector<int>>(s["d"], "suite.d");
        if (s.contains("L")) cfg.suite_sides = get_as<std::vector<int>>(s["L"], "suite.L");
    }

    if (j.contains("solver")) {
        const json& s = j["solver"];
        reject_unknown(s, {"tolerance", "max_iterations", "preconditioner"}, "solver");
        cfg.solver.tolerance = get_as<double>(s.value("tolerance", json(1e-10)), "solver.tolerance");
        cfg.solver.max_iterations = get_as<std::size_t>(s.value("max_iterations", json(0)), "solver.max_iterations");
        const auto pc = get_as<std::string>(s.value("preconditioner", json("spectral")), "solver.preconditioner");
        if (pc == "spectral") cfg.solver.preconditioner = Preconditioner::ConstantSpectral;
        else if (pc == "none") cfg.solver.preconditioner = Preconditioner::None;
        else throw ConfigError("solver.preconditioner must be 'spectral' or 'none'");
    }

    if (j.contains("reference")) {
        const json& r = j["reference"];
        if (r.is_string() && r.get<std::string>() == "identity") {
            cfg.reference.matrix = Matrix::Identity(cfg.dim, cfg.dim);
        } else if (r.is_object()) {
            reject_unknown(r, {"matrix", "manifest", "L", "realizations", "seed"}, "reference");
            if (r.contains("matrix")) cfg.reference.matrix = parse_matrix(r["matrix"], cfg.dim);
            if (r.contains("manifest")) cfg.reference.manifest = get_as<std::string>(r["manifest"], "reference.manifest");
            cfg.reference.side = get_as<int>(r.value("L", json(0)), "reference.L");
            cfg.reference.realizations = get_as<std::size_t>(r.value("realizations", json(0)), "reference.realizations");
            if (r.contains("seed")) cfg.reference.seed = get_as<std::uint64_t>(r["seed"], "reference.seed");
        } else {
            throw ConfigError("reference must be 'identity' or an object");
        }
    }

    if (j.contains("acceptance")) {
        for (auto it = j["acceptance"].begin(); it != j["acceptance"].end(); ++it) {
            cfg.acceptance[it.key()] = get_as<double>(it.value(), "acceptance." + it.key());
        }
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

std::string config_to_json(const RunConfig& cfg) {
    json j;
    j["experiment"] = experiment_name(cfg.experiment);
    j["d"] = cfg.dim;
    j["L"] = cfg.sides;
    j["measure"] = measure_to_json(cfg.measure, cfg.dim);
    j["rhs"] = rhs_to_json(cfg.rhs);
    j["realizations"] = cfg.realizations;
    j["seed"] = cfg.seed;
    j["budget"] = cfg.budget;
    j["instances"] = cfg.instances;
    j["suite"] = {{"d", cfg.suite_dims}, {"L", cfg.suite_sides}};
    j["solver"] = {{"tolerance", cfg.solver.tolerance},
                   {"max_iterations", cfg.solver.max_iterations},
                   {"preconditioner", cfg.solver.preconditioner == Preconditioner::None ? "none" : "spectral"}};
    json ref = json::object();
    if (cfg.reference.matrix) ref["matrix"] = matrix_to_json(*cfg.reference.matrix);
    if (cfg.reference.manifest) ref["manifest"] = cfg.reference.manifest->string();
    if (cfg.reference.side) ref["L"] = cfg.reference.side;
    if (cfg.reference.realizations) ref["realizations"] = cfg.reference.realizations;
    if (cfg.reference.seed) ref["seed"] = *cfg.reference.seed;
    j["reference"] = ref;
    json acc = json::object();
    for (const auto& [k, v] : cfg.acceptance) acc[k] = v;
    j["acceptance"] = acc;
    return j.dump(2);
}

}  // namespace homlab
