#pragma once

// End-to-end estimation: split, per-arm mixture cure fits, cure and time
// metrics, double matching, Kaplan-Meier contrasts.

#include <nlohmann/json.hpp>

#include <future>
#include <string>
#include <vector>

#include "curematch/baselines.hpp"
#include "curematch/data.hpp"
#include "curematch/matching.hpp"
#include "curematch/metric.hpp"
#include "curematch/mixture_cure.hpp"
#include "curematch/survival.hpp"

namespace curematch {

struct McmModel {
    MixtureCureFit fit1;
    MixtureCureFit fit0;
    WeightMatrix w_cure;
    WeightMatrix w_time;
};

inline void to_json(nlohmann::json& j, const McmModel& m) {
    j = {{"fit_treated", m.fit1}, {"fit_control", m.fit0}, {"w_cure", m.w_cure}, {"w_time", m.w_time}};
}

/// Fits both arms (concurrently when jobs > 1) and derives the two metrics.
inline McmModel fit_mcm_pair(const Cohort& c, const Split& split, const FitConfig& cfg, int jobs = 1) {
    McmModel m;
    if (jobs > 1) {
        auto f1 = std::async(std::launch::async, [&] { return fit_mcm(c, split, 1, cfg); });
        m.fit0 = fit_mcm(c, split, 0, cfg);
        m.fit1 = f1.get();
    } else {
        m.fit1 = fit_mcm(c, split, 1, cfg);
        m.fit0 = fit_mcm(c, split, 0, cfg);
    }
    m.w_cure = build_weights(m.fit1, m.fit0, Estimand::cure);
    m.w_time = build_weights(m.fit1, m.fit0, Estimand::time);
    return m;
}

/// Cure effects from cure-metric groups, time effects from time-metric groups.
inline std::vector<HteRecord> mcm_hte(const Cohort& c, const Split& split, const McmModel& m, Index k, int jobs = 1) {
    return estimate_from_groups(c, knn_match(c, split, m.w_cure, k, jobs), knn_match(c, split, m.w_time, k, jobs));
}

/// Both estimands from one set of groups under the averaged metric.
inline std::vector<HteRecord> mcm_combined_hte(const Cohort& c, const Split& split, const McmModel& m, Index k,
                                               int jobs = 1) {
    return estimate_from_groups(c, knn_match(c, split, combine_weights(m.w_cure, m.w_time), k, jobs));
}

struct EstimateConfig {
    Index k = 50;
    double train_fraction = 0.35;
    std::uint64_t seed = 1;
    FitConfig fit;
    bool standardize = false;
    int jobs = 1;
};

inline void to_json(nlohmann::json& j, const EstimateConfig& c) {
    j = {{"k", c.k},       {"train_fraction", c.train_fraction}, {"seed", c.seed},
         {"fit", c.fit},   {"standardize", c.standardize},       {"jobs", c.jobs}};
}

inline void from_json(const nlohmann::json& j, EstimateConfig& c) {
    c.k = j.value("k", c.k);
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    c.seed = j.value("seed", c.seed);
    if (j.contains("fit")) c.fit = j.at("fit").get<FitConfig>();
    c.standardize = j.value("standardize", c.standardize);
    c.jobs = j.value("jobs", c.jobs);
}

struct EstimateResult {
    Split split;
    McmModel model;
    std::vector<HteRecord> records;
    std::vector<std::string> warnings;
};

/// The full estimator on a cohort. The fit seed follows the split seed so a
/// single seed controls every random choice.
inline EstimateResult run_estimate(const Cohort& cohort, const EstimateConfig& cfg) {
    EstimateResult r;
    r.split = split_cohort(cohort, cfg.train_fraction, cfg.seed);
    const Cohort work = cfg.standardize ? standardize(cohort, r.split) : cohort;
    FitConfig fc = cfg.fit;
    fc.seed = cfg.seed;
    r.model = fit_mcm_pair(work, r.split, fc, cfg.jobs);
    for (const auto* f : {&r.model.fit1, &r.model.fit0}) {
        for (const auto& w : f->warnings) r.warnings.push_back("arm " + std::to_string(f->arm) + ": " + w);
        if (!f->converged) {
            r.warnings.push_back("arm " + std::to_string(f->arm) + ": fit did not reach the gradient tolerance");
        }
    }
    r.records = mcm_hte(work, r.split, r.model, cfg.k, cfg.jobs);
    Index invalid = 0;
    for (const auto& rec : r.records) invalid += rec.time_valid ? 0 : 1;
    if (invalid > 0) {
        r.warnings.push_back(std::to_string(invalid) +
                             " subjects have a matched arm without events before the horizon; time effect is NA");
    }
    return r;
}

}  // namespace curematch
