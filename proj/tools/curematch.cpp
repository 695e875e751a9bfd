// Command-line front end: simulate, fit, estimate, benchmark, check.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "curematch.hpp"

namespace fs = std::filesystem;
using namespace curematch;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(path + ": " + e.what());
    }
}

void write_text(const std::string& path, const std::string& text) {
    csv::write_file(path, [&](std::ostream& o) { o << text; });
}

void log_resolved(const std::string& cmd, const nlohmann::json& cfg) {
    std::cerr << "curematch " << cmd << ": resolved config " << cfg.dump() << "\n";
}

// Options shared by fit and estimate.
struct DataOptions {
    std::string data;
    std::string config;
    double horizon = 0.0;
    CohortSchema schema;
    std::string covariates;
    EstimateConfig est;
    std::uint64_t seed = 1;
    std::string out;
};

void add_data_options(CLI::App* cmd, DataOptions& o) {
    cmd->add_option("--data", o.data, "Cohort CSV with a header row")->required();
    cmd->add_option("--config", o.config, "JSON config; flags override its values");
    cmd->add_option("--horizon", o.horizon, "Analysis horizon H (> 0)");
    cmd->add_option("--y", o.schema.y, "Observed-time column")->capture_default_str();
    cmd->add_option("--delta", o.schema.delta, "Event-indicator column")->capture_default_str();
    cmd->add_option("--z", o.schema.z, "Treatment-arm column")->capture_default_str();
    cmd->add_option("--covariates", o.covariates, "Comma-separated covariate columns (default: all others)");
    cmd->add_option("--train-fraction", o.est.train_fraction, "Share of subjects used for model fitting")
        ->capture_default_str();
    cmd->add_option("--seed", o.seed, "Seed for the split and the fit restarts")->capture_default_str();
    cmd->add_option("--tol", o.est.fit.tol, "Gradient sup-norm tolerance of the fit")->capture_default_str();
    cmd->add_option("--max-iter", o.est.fit.max_iter, "Optimizer iteration cap")->capture_default_str();
    cmd->add_option("--restarts", o.est.fit.n_restarts, "Number of optimizer starts")->capture_default_str();
    cmd->add_flag("--standardize", o.est.standardize, "Standardize continuous covariates with training statistics");
    cmd->add_option("--jobs", o.est.jobs, "Worker threads")->capture_default_str();
}

/// Config file first, then any flag given on the command line.
void resolve_data_options(CLI::App* cmd, DataOptions& o) {
    if (!o.config.empty()) {
        const nlohmann::json j = read_json(o.config);
        static const std::vector<std::string> known{"horizon", "schema", "k", "train_fraction", "seed",
                                                    "fit",     "standardize", "jobs"};
        for (const auto& [key, _] : j.items()) {
            if (std::find(known.begin(), known.end(), key) == known.end()) {
                throw UsageError(o.config + ": unknown key \"" + key + "\"");
            }
        }
        EstimateConfig file = j.get<EstimateConfig>();
        auto given = [&](const char* flag) { return cmd->count(flag) > 0; };
        if (!given("--train-fraction")) o.est.train_fraction = file.train_fraction;
        if (!given("--seed")) o.seed = file.seed;
        if (!given("--tol")) o.est.fit.tol = file.fit.tol;
        if (!given("--max-iter")) o.est.fit.max_iter = file.fit.max_iter;
        if (!given("--restarts")) o.est.fit.n_restarts = file.fit.n_restarts;
        if (!given("--standardize")) o.est.standardize = file.standardize;
        if (!given("--jobs")) o.est.jobs = file.jobs;
        if (!given("--k") && j.contains("k")) o.est.k = file.k;
        if (!given("--horizon") && j.contains("horizon")) o.horizon = j.at("horizon").get<double>();
        if (j.contains("schema")) {
            const CohortSchema s = j.at("schema").get<CohortSchema>();
            if (!given("--y")) o.schema.y = s.y;
            if (!given("--delta")) o.schema.delta = s.delta;
            if (!given("--z")) o.schema.z = s.z;
            if (!given("--covariates")) o.schema.covariates = s.covariates;
        }
    }
    if (!o.covariates.empty()) {
        o.schema.covariates.clear();
        std::stringstream ss(o.covariates);
        for (std::string c; std::getline(ss, c, ',');) {
            if (!c.empty()) o.schema.covariates.push_back(c);
        }
    }
    if (!(o.horizon > 0.0)) throw UsageError("--horizon must be given and positive");
    if (o.est.k < 1) throw UsageError("--k must be positive");
    o.est.seed = o.seed;
}

nlohmann::json data_options_json(const DataOptions& o) {
    return {{"data", o.data}, {"horizon", o.horizon}, {"schema", o.schema}, {"estimate", o.est}};
}

void warn_horizon(const Cohort& c) {
    if (c.y().maxCoeff() < c.horizon()) {
        std::cerr << "warning: no subject is followed up to the horizon; every censored subject is censored "
                     "before H, so cure fractions rest on the model's extrapolation\n";
    }
}

int cmd_simulate(const std::string& scenario, bool confounded, Index n, std::uint64_t seed, const std::string& out) {
    if (!is_scenario_name(scenario)) {
        throw UsageError("unknown scenario \"" + scenario + "\"; expected one of: " + scenario_name_list());
    }
    const ScenarioSpec spec = make_scenario(scenario, confounded, n, seed);
    log_resolved("simulate", spec);
    const SimResult sim = simulate(spec);
    fs::create_directories(out);
    write_cohort(sim.cohort, (fs::path(out) / "cohort.csv").string());
    write_truth(sim.truth, (fs::path(out) / "truth.csv").string());
    write_text((fs::path(out) / "spec.json").string(), nlohmann::json(spec).dump(2) + "\n");
    std::cerr << "wrote cohort.csv, truth.csv, spec.json to " << out << "\n";
    return 0;
}

int cmd_fit(CLI::App* cmd, DataOptions& o) {
    resolve_data_options(cmd, o);
    log_resolved("fit", data_options_json(o));
    const Cohort c = load_cohort(o.data, o.schema, o.horizon);
    warn_horizon(c);
    const Split split = split_cohort(c, o.est.train_fraction, o.seed);
    const Cohort work = o.est.standardize ? standardize(c, split) : c;
    FitConfig fc = o.est.fit;
    fc.seed = o.seed;
    const McmModel m = fit_mcm_pair(work, split, fc, o.est.jobs);
    for (const auto* f : {&m.fit1, &m.fit0}) {
        for (const auto& w : f->warnings) std::cerr << "warning: arm " << f->arm << ": " << w << "\n";
    }
    nlohmann::json j = m;
    j["covariates"] = c.covariates().names();
    const std::string text = j.dump(2) + "\n";
    if (o.out.empty()) {
        std::cout << text;
    } else {
        write_text(o.out, text);
    }
    return 0;
}

int cmd_estimate(CLI::App* cmd, DataOptions& o, const std::string& model_out) {
    resolve_data_options(cmd, o);
    log_resolved("estimate", data_options_json(o));
    const Cohort c = load_cohort(o.data, o.schema, o.horizon);
    warn_horizon(c);
    const EstimateResult r = run_estimate(c, o.est);
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
    export_hte(r.records, o.out);
    if (!model_out.empty()) write_text(model_out, nlohmann::json(r.model).dump(2) + "\n");
    std::cerr << "wrote " << r.records.size() << " estimates to " << o.out << "\n";
    return 0;
}

struct BenchOptions {
    std::string config;
    std::string out;
    std::vector<std::string> scenarios;
    std::vector<std::string> methods;
    bool confounded = false;
    Index n = 0;
    Index k = 0;
    int reps = 0;
    std::uint64_t seed = 0;
    int jobs = 1;
    bool dump = false;
    bool audit = false;
};

int cmd_benchmark(CLI::App* cmd, const BenchOptions& o) {
    BenchmarkConfig cfg;
    if (!o.config.empty()) {
        try {
            cfg = read_json(o.config).get<BenchmarkConfig>();
        } catch (const nlohmann::json::exception& e) {
            throw UsageError(o.config + ": " + e.what());
        }
    }
    auto given = [&](const char* flag) { return cmd->count(flag) > 0; };
    if (given("--scenarios")) cfg.scenarios = o.scenarios;
    if (given("--methods")) cfg.methods = o.methods;
    if (given("--confounded")) cfg.confounded = o.confounded;
    if (given("--n")) cfg.n = o.n;
    if (given("--k")) cfg.k = o.k;
    if (given("--reps")) cfg.reps = o.reps;
    if (given("--seed")) cfg.seed = o.seed;
    if (given("--jobs")) cfg.jobs = o.jobs;
    if (given("--out")) cfg.output_dir = o.out;
    if (given("--dump-subjects") || o.audit) cfg.dump_subjects = cfg.dump_subjects || o.dump || o.audit;
    if (cfg.output_dir.empty()) throw UsageError("benchmark needs --out or output_dir in the config");
    for (const auto& s : cfg.scenarios) {
        if (!is_scenario_name(s)) {
            throw UsageError("unknown scenario \"" + s + "\"; expected one of: " + scenario_name_list());
        }
    }
    for (const auto& m : cfg.methods) {
        try {
            method_rank(m);
        } catch (const DataError& e) {
            throw UsageError(e.what());
        }
    }
    try {
        cfg = [&] {
            BenchmarkConfig n = normalized(cfg);
            n.output_dir = cfg.output_dir;
            n.dump_subjects = cfg.dump_subjects;
            n.jobs = cfg.jobs;
            return n;
        }();
    } catch (const DataError& e) {
        throw UsageError(e.what());
    }
    nlohmann::json resolved = cfg;
    resolved["output_dir"] = cfg.output_dir;
    resolved["jobs"] = cfg.jobs;
    resolved["dump_subjects"] = cfg.dump_subjects;
    log_resolved("benchmark", resolved);

    const MaeTable t = run_benchmark(cfg);
    report(t, cfg.output_dir);
    std::cout << table_csv(t);
    int failed = 0;
    for (const auto& c : t.cells) failed += c.failed ? 1 : 0;
    if (failed) std::cerr << "warning: " << failed << " cells failed; see mae_table.json for messages\n";
    if (o.audit) {
        const AuditResult a = audit_report(t, cfg.output_dir);
        std::cerr << "self-audit: " << (a.passed ? "passed" : "FAILED") << " (" << a.files_checked
                  << " dumps, max abs difference " << a.max_abs_diff << ")\n";
        for (const auto& p : a.problems) std::cerr << "  " << p << "\n";
        if (!a.passed) return 1;
    }
    return 0;
}

int cmd_check(const std::string& fault) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto results = run_checks(fault);
    bool ok = true;
    for (const auto& r : results) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
        ok = ok && r.passed;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (ok ? "all checks passed" : "checks FAILED") << " in " << secs << " s\n";
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Treatment-effect estimation for survival data with a cured fraction"};
    app.require_subcommand(1);

    std::string scenario;
    bool sim_confounded = false;
    Index sim_n = 20000;
    std::uint64_t sim_seed = 1;
    std::string sim_out;
    auto* sim = app.add_subcommand("simulate", "Draw a cohort from a benchmark scenario");
    sim->add_option("--scenario", scenario, "One of: " + scenario_name_list())->required();
    sim->add_flag("--confounded", sim_confounded, "Use the confounded treatment-assignment model");
    sim->add_option("--n", sim_n, "Number of subjects")->capture_default_str();
    sim->add_option("--seed", sim_seed, "Random seed")->capture_default_str();
    sim->add_option("--out", sim_out, "Output directory")->required();

    DataOptions fit_o;
    auto* fit = app.add_subcommand("fit", "Fit the per-arm mixture cure models and report the metric weights");
    add_data_options(fit, fit_o);
    fit->add_option("--out", fit_o.out, "Output JSON (default: stdout)");

    DataOptions est_o;
    std::string model_out;
    auto* est = app.add_subcommand("estimate", "Estimate per-subject effects on cure probability and event time");
    add_data_options(est, est_o);
    est->add_option("--k", est_o.est.k, "Neighbours per arm")->capture_default_str();
    est->add_option("--out", est_o.out, "Output CSV of per-subject estimates")->required();
    est->add_option("--model-out", model_out, "Optional JSON with the fitted models and weights");

    BenchOptions bo;
    auto* bench = app.add_subcommand("benchmark", "Run the simulation benchmark and write MAE tables");
    bench->add_option("--config", bo.config, "JSON config; flags override its values");
    bench->add_option("--out", bo.out, "Output directory");
    bench->add_option("--scenarios", bo.scenarios, "Scenario names")->delimiter(',');
    bench->add_option("--methods", bo.methods, "Method ids: " + method_name_list())->delimiter(',');
    bench->add_flag("--confounded", bo.confounded, "Use confounded treatment assignment");
    bench->add_option("--n", bo.n, "Subjects per replication");
    bench->add_option("--k", bo.k, "Neighbours per arm");
    bench->add_option("--reps", bo.reps, "Replications per scenario");
    bench->add_option("--seed", bo.seed, "Master seed");
    bench->add_option("--jobs", bo.jobs, "Worker threads (does not change results)");
    bench->add_flag("--dump-subjects", bo.dump, "Archive per-subject estimates under <out>/subjects");
    bench->add_flag("--audit", bo.audit, "Recompute the table from the per-subject dumps");

    std::string fault;
    auto* check = app.add_subcommand("check", "Run the fast numerical self-checks");
    check->add_option("--inject-fault", fault, "Corrupt one check's value")->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*sim) return cmd_simulate(scenario, sim_confounded, sim_n, sim_seed, sim_out);
        if (*fit) return cmd_fit(fit, fit_o);
        if (*est) return cmd_estimate(est, est_o, model_out);
        if (*bench) return cmd_benchmark(bench, bo);
        if (*check) {
            if (!fault.empty() && std::find(kCheckNames.begin(), kCheckNames.end(), fault) == kCheckNames.end()) {
                throw UsageError("unknown check \"" + fault + "\"");
            }
            return cmd_check(fault);
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
