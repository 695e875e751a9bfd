#pragma once

// Synthetic cohorts with a cured fraction, their analytic effect truths, and
// the oracle estimators used to split estimation error into its sources.

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "curematch/data.hpp"
#include "curematch/distributions.hpp"
#include "curematch/error.hpp"
#include "curematch/matching.hpp"
#include "curematch/metric.hpp"
#include "curematch/rng.hpp"
#include "curematch/survival.hpp"

namespace curematch {

/// intercept + x . coef
struct LinearPredictor {
    double intercept = 0.0;
    Eigen::VectorXd coef;

    [[nodiscard]] double at(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
        return intercept + x.dot(coef.transpose());
    }

    friend bool operator==(const LinearPredictor& a, const LinearPredictor& b) {
        return a.intercept == b.intercept && a.coef.size() == b.coef.size() && a.coef == b.coef;
    }
};

inline constexpr std::array<std::string_view, 4> kScenarioNames{"cure_only", "time_only", "both_indep",
                                                                 "both_overlap"};

struct ScenarioSpec {
    std::string name;
    bool confounded = false;
    Index n = 20000;
    int p_bin = 10;
    int p_cont = 10;
    double horizon_h = 800.0;
    LinearPredictor beta_z;   // treatment assignment
    LinearPredictor beta_e1;  // P(uncured) under treatment
    LinearPredictor beta_e0;  // P(uncured) under control
    LinearPredictor lam1;     // log-time location under treatment
    LinearPredictor lam0;     // log-time location under control
    double sigma = 1.0;
    double censor_upper = 1200.0;
    std::uint64_t seed = 1;

    [[nodiscard]] int p() const noexcept { return p_bin + p_cont; }
    friend bool operator==(const ScenarioSpec&, const ScenarioSpec&) = default;
};

namespace detail {

/// Builds a length-20 predictor from (covariate number, coefficient) pairs.
inline LinearPredictor lp(double intercept, std::initializer_list<std::pair<int, double>> terms) {
    LinearPredictor out{intercept, Eigen::VectorXd::Zero(20)};
    for (auto [j, c] : terms) out.coef[j - 1] = c;
    return out;
}

}  // namespace detail

inline bool is_scenario_name(std::string_view name) {
    for (auto s : kScenarioNames) {
        if (s == name) return true;
    }
    return false;
}

inline std::string scenario_name_list() {
    std::string s;
    for (auto n : kScenarioNames) {
        if (!s.empty()) s += ", ";
        s += n;
    }
    return s;
}

/// The four benchmark data-generating settings, optionally with the
/// confounded treatment-assignment models.
inline ScenarioSpec make_scenario(std::string_view name, bool confounded = false, Index n = 20000,
                                  std::uint64_t seed = 1) {
    using detail::lp;
    ScenarioSpec s;
    s.name = std::string(name);
    s.confounded = confounded;
    s.n = n;
    s.seed = seed;
    s.censor_upper = 1.5 * s.horizon_h;
    s.beta_z = lp(0.0, {{20, 0.5}});
    if (name == "cure_only") {
        s.beta_e1 = lp(0.7, {{17, 0.5}, {18, 0.5}, {19, 0.8}});
        s.beta_e0 = lp(1.2, {{1, 0.3}, {2, 0.5}, {10, 0.2}});
        s.lam1 = lp(4.5, {{2, 0.3}, {19, 0.5}});
        s.lam0 = lp(3.5, {{2, 0.3}, {19, 0.5}});
        if (confounded) s.beta_z = lp(0.5, {{2, 0.2}, {3, 0.8}, {19, 0.3}, {20, -0.5}});
    } else if (name == "time_only") {
        s.beta_e1 = lp(1.0, {{1, 0.2}, {2, -0.1}, {17, -0.8}, {18, 0.5}, {19, 0.4}, {20, -0.8}});
        s.beta_e0 = s.beta_e1;
        s.lam1 = lp(4.5, {{1, 0.4}, {2, -0.2}, {3, 0.3}, {15, 0.8}, {16, -0.6}, {17, -0.5}});
        s.lam0 = lp(3.5, {{1, 0.2}, {2, 0.2}, {3, 0.5}, {15, 0.2}, {16, -0.1}, {17, -0.1}});
        if (confounded) s.beta_z = lp(0.5, {{2, 0.3}, {3, -0.2}, {16, 0.4}, {17, 0.5}});
    } else if (name == "both_indep") {
        s.beta_e1 = lp(0.7, {{17, 0.3}, {18, 0.7}, {19, 0.2}, {20, -0.8}});
        s.beta_e0 = lp(1.5, {});
        s.lam1 = lp(4.5, {{2, 1.2}, {3, -0.1}, {15, 0.3}});
        s.lam0 = lp(3.5, {{2, 0.3}, {3, 0.2}, {15, 0.3}});
        if (confounded) s.beta_z = lp(0.5, {{3, 0.3}, {4, -0.2}, {16, 0.4}, {17, 0.6}});
    } else if (name == "both_overlap") {
        s.beta_e1 = lp(0.7, {{3, 0.2}, {17, 0.3}, {18, 0.7}, {19, 0.2}, {20, -0.8}});
        s.beta_e0 = lp(1.5, {{3, -0.4}});
        s.lam1 = lp(4.5, {{2, 1.2}, {15, 0.3}, {17, 0.5}, {18, -0.6}});
        s.lam0 = lp(3.5, {{2, 0.3}, {3, 0.4}, {15, 0.3}, {17, 0.1}, {18, -0.2}});
        if (confounded) s.beta_z = lp(0.5, {{3, 0.4}, {16, 0.3}, {17, 0.6}, {18, -0.5}});
    } else {
        throw DataError("unknown scenario \"" + std::string(name) + "\"; expected one of: " + scenario_name_list());
    }
    return s;
}

inline void to_json(nlohmann::json& j, const LinearPredictor& l) {
    j = {{"intercept", l.intercept}, {"coef", std::vector<double>(l.coef.begin(), l.coef.end())}};
}

inline void from_json(const nlohmann::json& j, LinearPredictor& l) {
    l.intercept = j.at("intercept").get<double>();
    const auto v = j.at("coef").get<std::vector<double>>();
    l.coef = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
}

inline void to_json(nlohmann::json& j, const ScenarioSpec& s) {
    j = {{"name", s.name},       {"confounded", s.confounded}, {"n", s.n},
         {"p_bin", s.p_bin},     {"p_cont", s.p_cont},         {"horizon_h", s.horizon_h},
         {"beta_z", s.beta_z},   {"beta_e1", s.beta_e1},       {"beta_e0", s.beta_e0},
         {"lam1", s.lam1},       {"lam0", s.lam0},             {"sigma", s.sigma},
         {"censor_upper", s.censor_upper}, {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, ScenarioSpec& s) {
    j.at("name").get_to(s.name);
    j.at("confounded").get_to(s.confounded);
    j.at("n").get_to(s.n);
    j.at("p_bin").get_to(s.p_bin);
    j.at("p_cont").get_to(s.p_cont);
    j.at("horizon_h").get_to(s.horizon_h);
    j.at("beta_z").get_to(s.beta_z);
    j.at("beta_e1").get_to(s.beta_e1);
    j.at("beta_e0").get_to(s.beta_e0);
    j.at("lam1").get_to(s.lam1);
    j.at("lam0").get_to(s.lam0);
    j.at("sigma").get_to(s.sigma);
    j.at("censor_upper").get_to(s.censor_upper);
    j.at("seed").get_to(s.seed);
}

/// Potential outcomes under both arms and the effect truths per subject.
struct SimTruth {
    std::vector<int> e1, e0;      // 1 = uncured
    Eigen::VectorXd t1, t0;       // event times; NaN where cured
    Eigen::VectorXd hte_cure;     // P(E0=1|x) - P(E1=1|x)
    Eigen::VectorXd hte_time;     // E[T1|x, T1<H] - E[T0|x, T0<H]

    friend bool operator==(const SimTruth& a, const SimTruth& b) {
        auto same = [](const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
            if (u.size() != v.size()) return false;
            for (Index i = 0; i < u.size(); ++i) {
                if (!(u[i] == v[i] || (std::isnan(u[i]) && std::isnan(v[i])))) return false;
            }
            return true;
        };
        return a.e1 == b.e1 && a.e0 == b.e0 && same(a.t1, b.t1) && same(a.t0, b.t0) &&
               same(a.hte_cure, b.hte_cure) && same(a.hte_time, b.hte_time);
    }
};

struct TrueHte {
    double cure;
    double time;
};

inline TrueHte true_hte(const ScenarioSpec& s, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
    const double cure = expit(s.beta_e0.at(x)) - expit(s.beta_e1.at(x));
    const double m1 = trunc_mean({s.lam1.at(x), s.sigma, s.horizon_h});
    const double m0 = trunc_mean({s.lam0.at(x), s.sigma, s.horizon_h});
    return {cure, m1 - m0};
}

struct SimResult {
    Cohort cohort;
    SimTruth truth;
};

/// Draws one cohort. Per subject, in order: covariates, treatment, one
/// uniform shared by both arms' cure draws, one shared by both arms' event
/// times, then the censoring time.
inline SimResult simulate(const ScenarioSpec& s) {
    const Index n = s.n;
    const int p = s.p();
    if (n < 4) throw DataError("simulate: n must be at least 4");
    if (s.beta_z.coef.size() != p || s.beta_e1.coef.size() != p || s.beta_e0.coef.size() != p ||
        s.lam1.coef.size() != p || s.lam0.coef.size() != p) {
        throw DataError("simulate: coefficient vectors must have length p_bin + p_cont");
    }
    Rng rng(derive_seed(s.seed, {0x51u}));
    Eigen::MatrixXd x(n, p);
    Eigen::VectorXd y(n);
    std::vector<int> delta(static_cast<std::size_t>(n));
    std::vector<int> z(static_cast<std::size_t>(n));
    SimTruth tr;
    tr.e1.resize(static_cast<std::size_t>(n));
    tr.e0.resize(static_cast<std::size_t>(n));
    tr.t1.resize(n);
    tr.t0.resize(n);
    tr.hte_cure.resize(n);
    tr.hte_time.resize(n);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double h = s.horizon_h;

    for (Index i = 0; i < n; ++i) {
        for (int j = 0; j < s.p_bin; ++j) x(i, j) = uniform_open(rng) < 0.5 ? 1.0 : 0.0;
        for (int j = s.p_bin; j < p; ++j) x(i, j) = norm_quantile(uniform_open(rng));
        const auto xi = x.row(i);
        const int zi = uniform_open(rng) < expit(s.beta_z.at(xi)) ? 1 : 0;
        const double u_e = uniform_open(rng);
        const double u_t = uniform_open(rng);
        const double c = s.censor_upper * uniform_open(rng);

        const auto ui = static_cast<std::size_t>(i);
        tr.e1[ui] = u_e < expit(s.beta_e1.at(xi)) ? 1 : 0;
        tr.e0[ui] = u_e < expit(s.beta_e0.at(xi)) ? 1 : 0;
        const TruncLogNormal d1{s.lam1.at(xi), s.sigma, h};
        const TruncLogNormal d0{s.lam0.at(xi), s.sigma, h};
        tr.t1[i] = tr.e1[ui] ? trunc_lognormal_quantile(d1, u_t) : nan;
        tr.t0[i] = tr.e0[ui] ? trunc_lognormal_quantile(d0, u_t) : nan;
        tr.hte_cure[i] = expit(s.beta_e0.at(xi)) - expit(s.beta_e1.at(xi));
        tr.hte_time[i] = trunc_mean(d1) - trunc_mean(d0);

        const int e = zi ? tr.e1[ui] : tr.e0[ui];
        const double t = zi ? tr.t1[i] : tr.t0[i];
        z[ui] = zi;
        if (e && t < std::min(c, h)) {
            y[i] = t;
            delta[ui] = 1;
        } else {
            y[i] = std::min(c, h);
            delta[ui] = 0;
        }
    }
    std::vector<ColumnKind> kinds(static_cast<std::size_t>(p), ColumnKind::continuous);
    for (int j = 0; j < s.p_bin; ++j) kinds[static_cast<std::size_t>(j)] = ColumnKind::binary;
    Covariates cov(std::move(x), {}, std::move(kinds));
    return {Cohort(std::move(cov), std::move(y), std::move(delta), std::move(z), h), std::move(tr)};
}

/// Metric weights from the true coefficients, arms averaged as for fitted models.
inline WeightMatrix true_weights(const ScenarioSpec& s, Estimand e) {
    if (e == Estimand::cure) {
        return build_weights(s.beta_e1.coef, s.beta_e0.coef, WeightKind::cure, "true coefficients: cure part");
    }
    return build_weights(s.lam1.coef, s.lam0.coef, WeightKind::time, "true coefficients: time part");
}

enum class OracleKind { full, partial };

/// Full oracle: true potential cure statuses and event times of the matched
/// neighbours. Partial oracle: the same neighbours, Kaplan-Meier on observed data.
inline HteRecord oracle_record(const Cohort& c, const SimTruth& tr, const MatchedGroup& cure,
                               const MatchedGroup& time, OracleKind kind) {
    if (kind == OracleKind::partial) return estimate_hte(cure, time, c);
    if (cure.query_idx != time.query_idx) {
        throw DataError("oracle_record: matched groups refer to different query subjects");
    }
    HteRecord r;
    r.subject_idx = cure.query_idx;
    auto cured_share = [](const IndexList& m, const std::vector<int>& e) {
        double s = 0.0;
        for (Index j : m) s += 1 - e[static_cast<std::size_t>(j)];
        return s / static_cast<double>(m.size());
    };
    r.s1_h = cured_share(cure.m1, tr.e1);
    r.s0_h = cured_share(cure.m0, tr.e0);
    r.hte_cure = r.s1_h - r.s0_h;
    auto mean_time = [](const IndexList& m, const std::vector<int>& e, const Eigen::VectorXd& t) {
        double s = 0.0;
        Index k = 0;
        for (Index j : m) {
            if (e[static_cast<std::size_t>(j)]) {
                s += t[j];
                ++k;
            }
        }
        return k ? std::optional<double>(s / static_cast<double>(k)) : std::nullopt;
    };
    const auto m1 = mean_time(time.m1, tr.e1, tr.t1);
    const auto m0 = mean_time(time.m0, tr.e0, tr.t0);
    if (m1 && m0) {
        r.hte_time = *m1 - *m0;
        r.time_valid = true;
    }
    return r;
}

inline std::vector<HteRecord> oracle_hte(const Cohort& c, const Split& split, const SimTruth& tr,
                                         const ScenarioSpec& s, Index k, OracleKind kind, int jobs = 1) {
    const auto g_cure = knn_match(c, split, true_weights(s, Estimand::cure), k, jobs);
    const auto g_time = knn_match(c, split, true_weights(s, Estimand::time), k, jobs);
    std::vector<HteRecord> out;
    out.reserve(g_cure.size());
    for (std::size_t i = 0; i < g_cure.size(); ++i) out.push_back(oracle_record(c, tr, g_cure[i], g_time[i], kind));
    return out;
}

/// Copies the effect truths into the records.
inline void attach_truth(std::vector<HteRecord>& records, const SimTruth& tr) {
    for (auto& r : records) {
        r.truth_cure = tr.hte_cure[r.subject_idx];
        r.truth_time = tr.hte_time[r.subject_idx];
    }
}

/// Covariates, outcomes and truths of a simulated cohort as one CSV.
inline void write_truth(const SimTruth& tr, const std::string& path) {
    auto cell = [](double v) { return std::isnan(v) ? std::string("NA") : csv::format_double(v); };
    csv::write_file(path, [&](std::ostream& out) {
        csv::write_row(out, {"subject_id", "e1", "e0", "t1", "t0", "hte_cure", "hte_time"});
        for (Index i = 0; i < tr.hte_cure.size(); ++i) {
            const auto ui = static_cast<std::size_t>(i);
            csv::write_row(out, {std::to_string(i), std::to_string(tr.e1[ui]), std::to_string(tr.e0[ui]),
                                 cell(tr.t1[i]), cell(tr.t0[i]), csv::format_double(tr.hte_cure[i]),
                                 csv::format_double(tr.hte_time[i])});
        }
    });
}

}  // namespace curematch
