#pragma once

// Monte-Carlo benchmark over simulated scenarios: per replication simulate,
// split, fit, match and estimate with each method, then aggregate MAE tables.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "curematch/baselines.hpp"
#include "curematch/csv.hpp"
#include "curematch/error.hpp"
#include "curematch/pipeline.hpp"
#include "curematch/rng.hpp"
#include "curematch/simulation.hpp"

namespace curematch {

struct MethodInfo {
    std::string_view id;
    std::string_view label;
    bool simulation_only;
};

/// Stable method ids in report row order.
inline constexpr std::array<MethodInfo, 9> kMethods{{
    {"oracle", "Oracle", true},
    {"partial_oracle", "Partial Oracle", true},
    {"mcm", "MCM KNN", false},
    {"mcm_combined", "MCM KNN combined", false},
    {"feature_select", "Feature Selection KNN", false},
    {"euclidean", "Euclidean KNN", false},
    {"propensity", "Propensity Score KNN", false},
    {"prognostic", "Prognostic Score KNN", false},
    {"cox", "Cox Model (no match)", false},
}};

inline std::string method_name_list() {
    std::string s;
    for (const auto& m : kMethods) {
        if (!s.empty()) s += ", ";
        s += m.id;
    }
    return s;
}

inline std::size_t method_rank(std::string_view id) {
    for (std::size_t i = 0; i < kMethods.size(); ++i) {
        if (kMethods[i].id == id) return i;
    }
    throw DataError("unknown method \"" + std::string(id) + "\"; expected one of: " + method_name_list());
}

inline const MethodInfo& method_info(std::string_view id) { return kMethods[method_rank(id)]; }

inline std::size_t scenario_rank(std::string_view name) {
    for (std::size_t i = 0; i < kScenarioNames.size(); ++i) {
        if (kScenarioNames[i] == name) return i;
    }
    throw DataError("unknown scenario \"" + std::string(name) + "\"; expected one of: " + scenario_name_list());
}

struct BenchmarkConfig {
    std::vector<std::string> scenarios{std::string(kScenarioNames[0])};
    bool confounded = false;
    std::vector<std::string> methods{"oracle", "partial_oracle", "mcm"};
    Index n = 20000;
    Index k = 50;
    int reps = 20;
    double train_fraction = 0.35;
    std::uint64_t seed = 1;
    FitConfig fit;
    std::string output_dir;
    bool dump_subjects = false;
    int jobs = 1;

    friend bool operator==(const BenchmarkConfig& a, const BenchmarkConfig& b) {
        return a.scenarios == b.scenarios && a.confounded == b.confounded && a.methods == b.methods &&
               a.n == b.n && a.k == b.k && a.reps == b.reps && a.train_fraction == b.train_fraction &&
               a.seed == b.seed && a.fit.tol == b.fit.tol && a.fit.max_iter == b.fit.max_iter &&
               a.fit.n_restarts == b.fit.n_restarts && a.fit.seed == b.fit.seed;
    }
};

/// Serializes the settings that determine results; output location and
/// worker count are left out so reports do not depend on them.
inline void to_json(nlohmann::json& j, const BenchmarkConfig& c) {
    j = {{"scenarios", c.scenarios}, {"confounded", c.confounded},
         {"methods", c.methods},     {"n", c.n},
         {"k", c.k},                 {"reps", c.reps},
         {"train_fraction", c.train_fraction}, {"seed", c.seed},
         {"fit", c.fit}};
}

/// Reads a config file; absent keys keep their defaults.
inline void from_json(const nlohmann::json& j, BenchmarkConfig& c) {
    static const std::vector<std::string> known{"scenarios", "confounded", "methods", "n",       "k",
                                                "reps",      "train_fraction", "seed", "fit", "output_dir",
                                                "dump_subjects", "jobs"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw SchemaError("benchmark config: unknown key \"" + key + "\"");
        }
    }
    if (j.contains("scenarios")) c.scenarios = j.at("scenarios").get<std::vector<std::string>>();
    c.confounded = j.value("confounded", c.confounded);
    if (j.contains("methods")) c.methods = j.at("methods").get<std::vector<std::string>>();
    c.n = j.value("n", c.n);
    c.k = j.value("k", c.k);
    c.reps = j.value("reps", c.reps);
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    c.seed = j.value("seed", c.seed);
    if (j.contains("fit")) c.fit = j.at("fit").get<FitConfig>();
    c.output_dir = j.value("output_dir", c.output_dir);
    c.dump_subjects = j.value("dump_subjects", c.dump_subjects);
    c.jobs = j.value("jobs", c.jobs);
}

/// Checks the config and puts scenarios and methods into report order.
inline BenchmarkConfig normalized(BenchmarkConfig c) {
    if (c.reps < 1) throw DataError("benchmark: reps must be at least 1");
    if (c.methods.empty()) throw DataError("benchmark: no methods");
    if (c.scenarios.empty()) throw DataError("benchmark: no scenarios");
    for (const auto& m : c.methods) method_rank(m);
    for (const auto& s : c.scenarios) scenario_rank(s);
    if (c.k < 1) throw DataError("benchmark: k must be positive");
    if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) {
        throw DataError("benchmark: train_fraction must lie in (0, 1)");
    }
    const double est = (1.0 - c.train_fraction) * static_cast<double>(c.n);
    if (static_cast<double>(c.k) >= 0.5 * est) {
        throw DataError("benchmark: k = " + std::to_string(c.k) + " is too large for n = " + std::to_string(c.n));
    }
    auto by = [](auto rank) { return [rank](const std::string& a, const std::string& b) { return rank(a) < rank(b); }; };
    std::sort(c.scenarios.begin(), c.scenarios.end(), by(scenario_rank));
    c.scenarios.erase(std::unique(c.scenarios.begin(), c.scenarios.end()), c.scenarios.end());
    std::sort(c.methods.begin(), c.methods.end(), by(method_rank));
    c.methods.erase(std::unique(c.methods.begin(), c.methods.end()), c.methods.end());
    return c;
}

/// Seed of one replication; depends only on (seed, scenario, variant, rep).
inline std::uint64_t replication_seed(std::uint64_t seed, std::string_view scenario, bool confounded, int rep) {
    return derive_seed(seed, {scenario_rank(scenario), confounded ? 1u : 0u, static_cast<std::uint64_t>(rep)});
}

/// One simulated dataset with results shared between methods.
class Replication {
public:
    Replication(ScenarioSpec spec, double train_fraction, FitConfig fit, int jobs)
        : spec_(std::move(spec)), sim_(simulate(spec_)), fit_(fit), jobs_(jobs) {
        split_ = split_cohort(sim_.cohort, train_fraction, derive_seed(spec_.seed, {1}));
        fit_.seed = derive_seed(spec_.seed, {2});
    }

    [[nodiscard]] const ScenarioSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] const Cohort& cohort() const noexcept { return sim_.cohort; }
    [[nodiscard]] const SimTruth& truth() const noexcept { return sim_.truth; }
    [[nodiscard]] const Split& split() const noexcept { return split_; }

    const McmModel& mcm_model() {
        if (!mcm_) mcm_ = fit_mcm_pair(sim_.cohort, split_, fit_, jobs_);
        return *mcm_;
    }

    /// Matched groups under the true-coefficient metrics, computed once per k.
    const std::pair<std::vector<MatchedGroup>, std::vector<MatchedGroup>>& truth_groups(Index k) {
        auto it = truth_groups_.find(k);
        if (it == truth_groups_.end()) {
            auto cure = knn_match(sim_.cohort, split_, true_weights(spec_, Estimand::cure), k, jobs_);
            auto time = knn_match(sim_.cohort, split_, true_weights(spec_, Estimand::time), k, jobs_);
            it = truth_groups_.emplace(k, std::make_pair(std::move(cure), std::move(time))).first;
        }
        return it->second;
    }

    std::vector<HteRecord> run(std::string_view method, Index k) {
        const Cohort& c = sim_.cohort;
        std::vector<HteRecord> out;
        if (method == "oracle" || method == "partial_oracle") {
            const auto& [gc, gt] = truth_groups(k);
            const OracleKind kind = method == "oracle" ? OracleKind::full : OracleKind::partial;
            out.reserve(gc.size());
            for (std::size_t i = 0; i < gc.size(); ++i) out.push_back(oracle_record(c, sim_.truth, gc[i], gt[i], kind));
        } else if (method == "mcm") {
            out = mcm_hte(c, split_, mcm_model(), k, jobs_);
        } else if (method == "mcm_combined") {
            out = mcm_combined_hte(c, split_, mcm_model(), k, jobs_);
        } else if (method == "feature_select") {
            out = feature_select_match_hte(c, split_, k, jobs_);
        } else if (method == "euclidean") {
            out = euclidean_match_hte(c, split_, k, jobs_);
        } else if (method == "propensity") {
            out = propensity_match_hte(c, split_, k, jobs_);
        } else if (method == "prognostic") {
            out = prognostic_match_hte(c, split_, k, jobs_);
        } else if (method == "cox") {
            out = cox_nomatch_hte(c, split_);
        } else {
            method_rank(method);
        }
        attach_truth(out, sim_.truth);
        return out;
    }

private:
    ScenarioSpec spec_;
    SimResult sim_;
    Split split_;
    FitConfig fit_;
    int jobs_;
    std::optional<McmModel> mcm_;
    std::map<Index, std::pair<std::vector<MatchedGroup>, std::vector<MatchedGroup>>> truth_groups_;
};

struct MaeSummary {
    double cure = 0.0;    // x100
    double time = 0.0;
    Index excluded = 0;   // subjects without a valid time effect
    Index n_time = 0;
};

/// Mean absolute errors against the attached truths; cure on the x100 scale,
/// time over subjects with a valid estimate.
inline MaeSummary mae(const std::vector<HteRecord>& records) {
    MaeSummary s;
    double cure = 0.0;
    double time = 0.0;
    for (const auto& r : records) {
        if (!r.truth_cure || !r.truth_time) throw DataError("mae: records lack truth values");
        cure += std::abs(r.hte_cure - *r.truth_cure);
        if (r.time_valid) {
            time += std::abs(*r.hte_time - *r.truth_time);
            ++s.n_time;
        } else {
            ++s.excluded;
        }
    }
    if (records.empty()) throw DataError("mae: no records");
    s.cure = 100.0 * cure / static_cast<double>(records.size());
    s.time = s.n_time ? time / static_cast<double>(s.n_time) : std::numeric_limits<double>::quiet_NaN();
    return s;
}

struct MaeCell {
    std::string scenario;
    std::string method;
    std::string estimand;  // "cure" (x100) or "time"
    std::vector<double> per_rep;
    double mean = 0.0;
    double sd = 0.0;       // across replications, n - 1 denominator
    Index excluded = 0;    // summed over replications
    bool failed = false;
    std::string error;

    friend bool operator==(const MaeCell&, const MaeCell&) = default;
};

struct MaeTable {
    BenchmarkConfig config;
    std::vector<MaeCell> cells;  // scenario-major, then method, then cure/time

    [[nodiscard]] const MaeCell& cell(std::string_view scenario, std::string_view method,
                                      std::string_view estimand) const {
        for (const auto& c : cells) {
            if (c.scenario == scenario && c.method == method && c.estimand == estimand) return c;
        }
        throw DataError("MaeTable: no cell for " + std::string(scenario) + "/" + std::string(method) + "/" +
                        std::string(estimand));
    }

    friend bool operator==(const MaeTable&, const MaeTable&) = default;
};

inline void finalize_cell(MaeCell& c) {
    if (c.failed || c.per_rep.empty()) {
        c.failed = true;
        c.mean = 0.0;
        c.sd = 0.0;
        return;
    }
    double s = 0.0;
    for (double v : c.per_rep) s += v;
    c.mean = s / static_cast<double>(c.per_rep.size());
    double ss = 0.0;
    for (double v : c.per_rep) ss += (v - c.mean) * (v - c.mean);
    c.sd = c.per_rep.size() > 1 ? std::sqrt(ss / static_cast<double>(c.per_rep.size() - 1)) : 0.0;
}

inline std::string scenario_key(std::string_view scenario, bool confounded) {
    return std::string(scenario) + (confounded ? "_confounded" : "");
}

inline std::filesystem::path subject_dump_path(const std::string& dir, std::string_view scenario, bool confounded,
                                               int rep, std::string_view method) {
    std::ostringstream name;
    name << "rep" << std::setw(4) << std::setfill('0') << rep << "_" << method << ".csv";
    return std::filesystem::path(dir) / "subjects" / scenario_key(scenario, confounded) / name.str();
}

namespace detail {

struct MethodOutcome {
    std::optional<MaeSummary> summary;
    std::string error;
};

struct RepOutcome {
    std::vector<MethodOutcome> methods;
};

inline RepOutcome run_replication(const BenchmarkConfig& cfg, const std::string& scenario, int rep, int inner_jobs) {
    RepOutcome out;
    out.methods.resize(cfg.methods.size());
    std::optional<Replication> r;
    try {
        ScenarioSpec spec = make_scenario(scenario, cfg.confounded, cfg.n,
                                          replication_seed(cfg.seed, scenario, cfg.confounded, rep));
        r.emplace(std::move(spec), cfg.train_fraction, cfg.fit, inner_jobs);
    } catch (const std::exception& e) {
        for (auto& m : out.methods) m.error = std::string("replication setup: ") + e.what();
        return out;
    }
    for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
        try {
            auto records = r->run(cfg.methods[m], cfg.k);
            out.methods[m].summary = mae(records);
            if (cfg.dump_subjects && !cfg.output_dir.empty()) {
                const auto path = subject_dump_path(cfg.output_dir, scenario, cfg.confounded, rep, cfg.methods[m]);
                std::filesystem::create_directories(path.parent_path());
                export_hte(std::move(records), path.string());
            }
        } catch (const std::exception& e) {
            out.methods[m].error = e.what();
        }
    }
    return out;
}

}  // namespace detail

/// Runs every (scenario, replication) task on up to `jobs` workers. Results
/// depend only on the config's seed, never on the worker count.
inline MaeTable run_benchmark(const BenchmarkConfig& config_in) {
    const BenchmarkConfig cfg = normalized(config_in);
    struct Task {
        std::size_t scenario;
        int rep;
    };
    std::vector<Task> tasks;
    for (std::size_t s = 0; s < cfg.scenarios.size(); ++s) {
        for (int r = 0; r < cfg.reps; ++r) tasks.push_back({s, r});
    }
    std::vector<detail::RepOutcome> outcomes(tasks.size());
    const int jobs = std::max(1, cfg.jobs);
    const auto workers = static_cast<std::size_t>(std::min<std::size_t>(static_cast<std::size_t>(jobs), tasks.size()));
    const int inner = std::max(1, jobs / static_cast<int>(workers));
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t t = next++; t < tasks.size(); t = next++) {
            outcomes[t] = detail::run_replication(cfg, cfg.scenarios[tasks[t].scenario], tasks[t].rep, inner);
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    }

    MaeTable table;
    table.config = cfg;
    for (std::size_t s = 0; s < cfg.scenarios.size(); ++s) {
        for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
            MaeCell cure;
            MaeCell time;
            cure.scenario = time.scenario = cfg.scenarios[s];
            cure.method = time.method = cfg.methods[m];
            cure.estimand = "cure";
            time.estimand = "time";
            for (std::size_t t = 0; t < tasks.size(); ++t) {
                if (tasks[t].scenario != s) continue;
                const auto& o = outcomes[t].methods[m];
                if (!o.summary) {
                    for (auto* c : {&cure, &time}) {
                        if (!c->failed) c->error = "rep " + std::to_string(tasks[t].rep) + ": " + o.error;
                        c->failed = true;
                    }
                    continue;
                }
                cure.per_rep.push_back(o.summary->cure);
                if (o.summary->n_time > 0) {
                    time.per_rep.push_back(o.summary->time);
                } else if (!time.failed) {
                    time.failed = true;
                    time.error = "rep " + std::to_string(tasks[t].rep) + ": no subject has a valid time effect";
                }
                time.excluded += o.summary->excluded;
            }
            finalize_cell(cure);
            finalize_cell(time);
            table.cells.push_back(std::move(cure));
            table.cells.push_back(std::move(time));
        }
    }
    return table;
}

inline void to_json(nlohmann::json& j, const MaeCell& c) {
    j = {{"scenario", c.scenario}, {"method", c.method}, {"estimand", c.estimand},
         {"per_rep", c.per_rep},   {"excluded", c.excluded}, {"failed", c.failed}};
    if (c.failed) {
        j["mean"] = nullptr;
        j["sd"] = nullptr;
        j["error"] = c.error;
    } else {
        j["mean"] = c.mean;
        j["sd"] = c.sd;
    }
}

inline void from_json(const nlohmann::json& j, MaeCell& c) {
    j.at("scenario").get_to(c.scenario);
    j.at("method").get_to(c.method);
    j.at("estimand").get_to(c.estimand);
    j.at("per_rep").get_to(c.per_rep);
    j.at("excluded").get_to(c.excluded);
    j.at("failed").get_to(c.failed);
    c.mean = c.failed ? 0.0 : j.at("mean").get<double>();
    c.sd = c.failed ? 0.0 : j.at("sd").get<double>();
    c.error = c.failed ? j.value("error", std::string{}) : std::string{};
}

inline void to_json(nlohmann::json& j, const MaeTable& t) {
    j = {{"config", t.config}, {"cells", t.cells}};
}

inline void from_json(const nlohmann::json& j, MaeTable& t) {
    t.config = j.at("config").get<BenchmarkConfig>();
    t.cells = j.at("cells").get<std::vector<MaeCell>>();
}

/// One row per method in registry order; per scenario the cure (x100) and
/// time cells as mean, sd and excluded-subject count. Failed cells read FAIL.
inline std::string table_csv(const MaeTable& t) {
    std::vector<std::string> scenarios;
    std::vector<std::string> methods;
    for (const auto& c : t.cells) {
        if (std::find(scenarios.begin(), scenarios.end(), c.scenario) == scenarios.end()) scenarios.push_back(c.scenario);
        if (std::find(methods.begin(), methods.end(), c.method) == methods.end()) methods.push_back(c.method);
    }
    std::ostringstream out;
    std::vector<std::string> header{"method", "label"};
    for (const auto& s : scenarios) {
        for (const char* e : {"cure", "time"}) {
            header.push_back(s + "_" + e + "_mean");
            header.push_back(s + "_" + e + "_sd");
            header.push_back(s + "_" + e + "_excluded");
        }
    }
    csv::write_row(out, header);
    for (const auto& m : methods) {
        std::vector<std::string> row{m, std::string(method_info(m).label)};
        for (const auto& s : scenarios) {
            for (const char* e : {"cure", "time"}) {
                const MaeCell& c = t.cell(s, m, e);
                row.push_back(c.failed ? "FAIL" : csv::format_double(c.mean));
                row.push_back(c.failed ? "FAIL" : csv::format_double(c.sd));
                row.push_back(std::to_string(c.excluded));
            }
        }
        csv::write_row(out, row);
    }
    return out.str();
}

inline std::string table_json(const MaeTable& t) { return nlohmann::json(t).dump(2) + "\n"; }

inline MaeTable parse_table_json(const std::string& text) {
    try {
        return nlohmann::json::parse(text).get<MaeTable>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("report JSON: ") + e.what());
    }
}

/// Writes mae_table.csv and mae_table.json into `dir`.
inline void report(const MaeTable& t, const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
    const std::string csv_text = table_csv(t);
    const std::string json_text = table_json(t);
    csv::write_file((std::filesystem::path(dir) / "mae_table.csv").string(), [&](std::ostream& o) { o << csv_text; });
    csv::write_file((std::filesystem::path(dir) / "mae_table.json").string(), [&](std::ostream& o) { o << json_text; });
}

struct AuditResult {
    bool passed = true;
    Index files_checked = 0;
    double max_abs_diff = 0.0;
    std::vector<std::string> problems;
};

/// Recomputes every successful cell from the per-subject dumps and compares
/// with the table.
inline AuditResult audit_report(const MaeTable& t, const std::string& dir, double tol = 1e-9) {
    AuditResult a;
    const BenchmarkConfig& cfg = t.config;
    for (const auto& s : cfg.scenarios) {
        for (const auto& m : cfg.methods) {
            const MaeCell& cc = t.cell(s, m, "cure");
            const MaeCell& ct = t.cell(s, m, "time");
            if (cc.failed) continue;
            std::vector<double> cure_reps;
            std::vector<double> time_reps;
            Index excluded = 0;
            for (int r = 0; r < cfg.reps; ++r) {
                const auto path = subject_dump_path(dir, s, cfg.confounded, r, m);
                if (!std::filesystem::exists(path)) {
                    a.problems.push_back("missing dump " + path.string());
                    continue;
                }
                const MaeSummary sum = mae(read_hte(path.string()));
                ++a.files_checked;
                cure_reps.push_back(sum.cure);
                if (sum.n_time > 0) time_reps.push_back(sum.time);
                excluded += sum.excluded;
            }
            MaeCell rc;
            MaeCell rt;
            rc.per_rep = std::move(cure_reps);
            rt.per_rep = std::move(time_reps);
            finalize_cell(rc);
            finalize_cell(rt);
            auto cmp = [&](const char* what, double x, double y) {
                const double d = std::abs(x - y);
                a.max_abs_diff = std::max(a.max_abs_diff, d);
                if (!(d <= tol)) a.problems.push_back(s + "/" + m + " " + what + " differs by " + std::to_string(d));
            };
            cmp("cure mean", rc.mean, cc.mean);
            cmp("cure sd", rc.sd, cc.sd);
            if (!ct.failed) {
                cmp("time mean", rt.mean, ct.mean);
                cmp("time sd", rt.sd, ct.sd);
                if (excluded != ct.excluded) a.problems.push_back(s + "/" + m + " exclusion count differs");
            }
        }
    }
    a.passed = a.problems.empty();
    return a;
}

}  // namespace curematch
