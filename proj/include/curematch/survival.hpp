#pragma once

// Kaplan-Meier curves on matched groups and the plug-in estimators for the
// cure-probability effect S1(H) - S0(H) and the conditional mean event time
// (G - H F) / (1 - F), with F = S(H) and G = integral of S over [0, H].

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "curematch/csv.hpp"
#include "curematch/data.hpp"
#include "curematch/error.hpp"
#include "curematch/matching.hpp"

namespace curematch {

struct SurvObs {
    double y;
    int delta;
};

/// Product-limit estimate as a right-continuous step function on [0, H].
struct KmCurve {
    std::vector<double> times;     // distinct event times, strictly increasing
    std::vector<double> surv;      // S just after each event time
    std::vector<int> n_at_risk;
    std::vector<int> n_events;
    double horizon_h = 0.0;

    /// S(t) for 0 <= t <= H.
    [[nodiscard]] double at(double t) const {
        auto it = std::upper_bound(times.begin(), times.end(), t);
        if (it == times.begin()) return 1.0;
        return surv[static_cast<std::size_t>(it - times.begin() - 1)];
    }
};

/// Ties: all events at a time leave together; subjects censored at an event
/// time count as at risk for it.
inline KmCurve km_fit(std::span<const SurvObs> obs, double horizon_h) {
    if (obs.empty()) throw DataError("km_fit: empty input");
    std::vector<SurvObs> sorted(obs.begin(), obs.end());
    for (const auto& o : sorted) {
        if (!(o.y <= horizon_h)) throw DataError("km_fit: observation beyond the horizon");
    }
    std::sort(sorted.begin(), sorted.end(), [](const SurvObs& a, const SurvObs& b) { return a.y < b.y; });
    KmCurve km;
    km.horizon_h = horizon_h;
    auto at_risk = static_cast<int>(sorted.size());
    double s = 1.0;
    std::size_t i = 0;
    while (i < sorted.size()) {
        const double t = sorted[i].y;
        int d = 0;
        int c = 0;
        for (; i < sorted.size() && sorted[i].y == t; ++i) {
            (sorted[i].delta ? d : c) += 1;
        }
        if (d > 0) {
            s *= 1.0 - static_cast<double>(d) / at_risk;
            km.times.push_back(t);
            km.surv.push_back(s);
            km.n_at_risk.push_back(at_risk);
            km.n_events.push_back(d);
        }
        at_risk -= d + c;
    }
    return km;
}

/// F(S) = S(H).
inline double km_surv_at_h(const KmCurve& km) {
    return km.surv.empty() ? 1.0 : km.surv.back();
}

/// G(S) = exact area under the step function on [0, H].
inline double km_integral(const KmCurve& km) {
    double area = 0.0;
    double prev_t = 0.0;
    double level = 1.0;
    for (std::size_t k = 0; k < km.times.size(); ++k) {
        area += (km.times[k] - prev_t) * level;
        prev_t = km.times[k];
        level = km.surv[k];
    }
    area += (km.horizon_h - prev_t) * level;
    return area;
}

/// (G - H F) / (1 - F); std::nullopt when F = 1 (no events before H).
inline std::optional<double> cmet_from_functionals(double f, double g, double horizon_h) {
    if (!(1.0 - f > 0.0)) return std::nullopt;
    return (g - horizon_h * f) / (1.0 - f);
}

/// Per-subject effect estimate; truth fields are filled in simulations only.
struct HteRecord {
    Index subject_idx = 0;
    double hte_cure = 0.0;
    std::optional<double> hte_time;
    bool time_valid = false;
    double s1_h = 1.0;
    double s0_h = 1.0;
    std::optional<double> truth_cure;
    std::optional<double> truth_time;
};

/// Per-arm summary of one matched sample.
struct ArmSummary {
    double surv_h;                 // F
    double area;                   // G
    std::optional<double> cmet;    // (G - H F) / (1 - F)
};

inline ArmSummary summarize_arm(const Cohort& c, std::span<const Index> rows) {
    std::vector<SurvObs> obs;
    obs.reserve(rows.size());
    for (Index i : rows) obs.push_back({c.y()[i], c.delta()[static_cast<std::size_t>(i)]});
    const KmCurve km = km_fit(obs, c.horizon());
    const double f = km_surv_at_h(km);
    const double g = km_integral(km);
    return {f, g, cmet_from_functionals(f, g, c.horizon())};
}

/// Combines cure-metric neighbours (m1_cure, m0_cure) and time-metric
/// neighbours (m1_time, m0_time) of one query subject.
inline HteRecord estimate_hte_from_rows(const Cohort& c, Index query,
                                        std::span<const Index> m1_cure, std::span<const Index> m0_cure,
                                        std::span<const Index> m1_time, std::span<const Index> m0_time) {
    HteRecord r;
    r.subject_idx = query;
    const ArmSummary c1 = summarize_arm(c, m1_cure);
    const ArmSummary c0 = summarize_arm(c, m0_cure);
    r.s1_h = c1.surv_h;
    r.s0_h = c0.surv_h;
    r.hte_cure = c1.surv_h - c0.surv_h;
    const ArmSummary t1 = summarize_arm(c, m1_time);
    const ArmSummary t0 = summarize_arm(c, m0_time);
    if (t1.cmet && t0.cmet) {
        r.hte_time = *t1.cmet - *t0.cmet;
        r.time_valid = true;
    }
    return r;
}

/// Pair of matched groups for one query: cure-metric groups feed the
/// cure effect, time-metric groups feed the CMET effect.
inline HteRecord estimate_hte(const MatchedGroup& cure, const MatchedGroup& time, const Cohort& c) {
    if (cure.query_idx != time.query_idx) {
        throw DataError("estimate_hte: matched groups refer to different query subjects");
    }
    return estimate_hte_from_rows(c, cure.query_idx, cure.m1, cure.m0, time.m1, time.m0);
}

/// Writes records sorted by subject id. Invalid CMET cells hold the literal NA.
inline void export_hte(std::vector<HteRecord> records, const std::string& path) {
    if (records.empty()) throw DataError("export_hte: no records");
    std::sort(records.begin(), records.end(),
              [](const HteRecord& a, const HteRecord& b) { return a.subject_idx < b.subject_idx; });
    const bool truth = std::any_of(records.begin(), records.end(), [](const HteRecord& r) {
        return r.truth_cure.has_value() || r.truth_time.has_value();
    });
    auto opt = [](const std::optional<double>& v) {
        return v ? csv::format_double(*v) : std::string("NA");
    };
    csv::write_file(path, [&](std::ostream& out) {
        std::vector<std::string> header{"subject_id", "hte_cure", "hte_time", "time_valid"};
        if (truth) header.insert(header.end(), {"truth_cure", "truth_time"});
        csv::write_row(out, header);
        for (const auto& r : records) {
            std::vector<std::string> cells{std::to_string(r.subject_idx), csv::format_double(r.hte_cure),
                                           r.time_valid ? opt(r.hte_time) : std::string("NA"),
                                           r.time_valid ? "1" : "0"};
            if (truth) {
                cells.push_back(opt(r.truth_cure));
                cells.push_back(opt(r.truth_time));
            }
            csv::write_row(out, cells);
        }
    });
}

/// Reads a file produced by export_hte.
inline std::vector<HteRecord> read_hte(const std::string& path) {
    const csv::Table t = csv::read_file(path);
    auto col = [&](const char* name) {
        auto c = t.column(name);
        if (!c) throw SchemaError(path + ": missing column \"" + std::string(name) + "\"");
        return *c;
    };
    const auto cid = col("subject_id");
    const auto cc = col("hte_cure");
    const auto ct = col("hte_time");
    const auto cv = col("time_valid");
    const auto ctc = t.column("truth_cure");
    const auto ctt = t.column("truth_time");
    auto opt = [&](const std::string& cell) -> std::optional<double> {
        if (cell == "NA") return std::nullopt;
        auto v = csv::parse_double(cell);
        if (!v) throw DataError(path + ": non-numeric cell \"" + cell + "\"");
        return v;
    };
    std::vector<HteRecord> out;
    for (const auto& row : t.rows) {
        HteRecord r;
        auto id = csv::parse_double(row[cid]);
        if (!id) throw DataError(path + ": bad subject_id \"" + row[cid] + "\"");
        r.subject_idx = static_cast<Index>(*id);
        auto cure = opt(row[cc]);
        if (!cure) throw DataError(path + ": hte_cure cannot be NA");
        r.hte_cure = *cure;
        r.hte_time = opt(row[ct]);
        r.time_valid = row[cv] == "1";
        if (ctc) r.truth_cure = opt(row[*ctc]);
        if (ctt) r.truth_time = opt(row[*ctt]);
        out.push_back(r);
    }
    return out;
}

}  // namespace curematch
