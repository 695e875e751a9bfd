#pragma once

// Diagonal variable-importance metrics: weights are half the summed absolute
// coefficients of the two arms' models, distances are weighted Euclidean.

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>
#include <string>
#include <string_view>

#include "curematch/error.hpp"
#include "curematch/mixture_cure.hpp"
#include "curematch/rng.hpp"

namespace curematch {

enum class WeightKind { cure, time, combined, euclidean, custom };

inline std::string_view to_string(WeightKind k) {
    switch (k) {
        case WeightKind::cure: return "cure";
        case WeightKind::time: return "time";
        case WeightKind::combined: return "combined";
        case WeightKind::euclidean: return "euclidean";
        case WeightKind::custom: return "custom";
    }
    return "custom";
}

inline WeightKind weight_kind_from_string(std::string_view s) {
    for (auto k : {WeightKind::cure, WeightKind::time, WeightKind::combined, WeightKind::euclidean,
                   WeightKind::custom}) {
        if (to_string(k) == s) return k;
    }
    throw DataError("unknown weight kind \"" + std::string(s) + "\"");
}

class WeightMatrix {
public:
    WeightMatrix() = default;

    WeightMatrix(Eigen::VectorXd weights, WeightKind kind, std::string source = {})
        : weights_(std::move(weights)), kind_(kind), source_(std::move(source)) {
        if (weights_.size() == 0) throw DataError("weights: empty vector");
        if (!weights_.allFinite() || (weights_.array() < 0.0).any()) {
            throw DataError("weights: entries must be finite and nonnegative");
        }
        if (!(weights_.array() > 0.0).any()) throw DegenerateMetricError();
    }

    static WeightMatrix unit(Index p, std::string source = "unit") {
        return {Eigen::VectorXd::Ones(p), WeightKind::euclidean, std::move(source)};
    }

    [[nodiscard]] const Eigen::VectorXd& weights() const noexcept { return weights_; }
    [[nodiscard]] WeightKind kind() const noexcept { return kind_; }
    [[nodiscard]] const std::string& source() const noexcept { return source_; }
    [[nodiscard]] Index size() const noexcept { return weights_.size(); }

    friend bool operator==(const WeightMatrix& a, const WeightMatrix& b) {
        return a.kind_ == b.kind_ && a.source_ == b.source_ && a.weights_.size() == b.weights_.size() &&
               a.weights_ == b.weights_;
    }

private:
    Eigen::VectorXd weights_;
    WeightKind kind_ = WeightKind::custom;
    std::string source_;
};

inline void to_json(nlohmann::json& j, const WeightMatrix& w) {
    j = {{"kind", std::string(to_string(w.kind()))},
         {"weights", std::vector<double>(w.weights().begin(), w.weights().end())},
         {"source", w.source()}};
}

inline void from_json(const nlohmann::json& j, WeightMatrix& w) {
    const auto v = j.at("weights").get<std::vector<double>>();
    w = WeightMatrix(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size())),
                     weight_kind_from_string(j.at("kind").get<std::string>()),
                     j.value("source", std::string{}));
}

/// w_j = (|c1_j| + |c0_j|) / 2 on coefficient vectors without intercepts.
inline WeightMatrix build_weights(const Eigen::VectorXd& coef1, const Eigen::VectorXd& coef0,
                                  WeightKind kind, std::string source = {}) {
    if (coef1.size() != coef0.size()) throw DataError("build_weights: coefficient length mismatch");
    Eigen::VectorXd w = 0.5 * (coef1.array().abs() + coef0.array().abs()).matrix();
    if (!(w.array() > 0.0).any()) throw DegenerateMetricError("all coefficients are zero");
    return {std::move(w), kind, std::move(source)};
}

enum class Estimand { cure, time };

/// Cure weights from the logistic parts, time weights from the AFT parts.
inline WeightMatrix build_weights(const MixtureCureFit& fit1, const MixtureCureFit& fit0, Estimand e) {
    if (fit1.arm == fit0.arm) throw DataError("build_weights: fits must come from opposite arms");
    const auto& f1 = fit1.arm == 1 ? fit1 : fit0;
    const auto& f0 = fit1.arm == 1 ? fit0 : fit1;
    if (e == Estimand::cure) {
        return build_weights(f1.params.beta, f0.params.beta, WeightKind::cure, "mixture cure fit: cure part");
    }
    return build_weights(f1.params.lambda, f0.params.lambda, WeightKind::time, "mixture cure fit: time part");
}

inline WeightMatrix combine_weights(const WeightMatrix& w_cure, const WeightMatrix& w_time) {
    if (w_cure.size() != w_time.size()) throw DataError("combine_weights: length mismatch");
    return {0.5 * (w_cure.weights() + w_time.weights()), WeightKind::combined,
            "mean of " + std::string(to_string(w_cure.kind())) + " and " +
                std::string(to_string(w_time.kind())) + " weights"};
}

/// Squared weighted distance, summed in coordinate order.
inline double wdist2(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                     const Eigen::VectorXd& w) {
    double s = 0.0;
    for (Index j = 0; j < w.size(); ++j) {
        const double d = x[j] - y[j];
        s += w[j] * (d * d);
    }
    return s;
}

inline double wdist(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                    const WeightMatrix& w) {
    if (x.size() != w.size() || y.size() != w.size()) throw DataError("wdist: length mismatch");
    return std::sqrt(wdist2(x, y, w.weights()));
}

/// sum_j g_j^2 / w_j, taking 0/0 as 0 and g^2/0 as +inf.
inline double dual_norm_sq(const Eigen::VectorXd& g, const Eigen::VectorXd& w) {
    double s = 0.0;
    for (Index j = 0; j < g.size(); ++j) {
        if (g[j] == 0.0) continue;
        if (w[j] == 0.0) return std::numeric_limits<double>::infinity();
        s += g[j] * g[j] / w[j];
    }
    return s;
}

struct WeightOptimalityReport {
    Eigen::VectorXd w_star;      // c |g| / sum |g|
    double objective_star = 0.0; // sum g^2 / w*
    double closed_form = 0.0;    // (sum |g|)^2 / c
    double min_margin = 0.0;     // min over trials of J(w) - J(w*)
    Index trials = 0;
    bool passed = false;
};

/// Draws `trials` random points on the simplex scaled to `scale_c` and checks
/// that none has a smaller dual norm than w* proportional to |coeffs|.
inline WeightOptimalityReport check_weight_optimality(const Eigen::VectorXd& coeffs, double scale_c,
                                                      Index trials, std::uint64_t seed = 1) {
    if (!(scale_c > 0.0)) throw DataError("check_weight_optimality: scale must be positive");
    const double l1 = coeffs.array().abs().sum();
    if (!(l1 > 0.0)) throw DegenerateMetricError("coefficients are all zero");
    WeightOptimalityReport rep;
    rep.w_star = scale_c * coeffs.array().abs().matrix() / l1;
    rep.objective_star = dual_norm_sq(coeffs, rep.w_star);
    rep.closed_form = l1 * l1 / scale_c;
    rep.trials = trials;
    rep.min_margin = std::numeric_limits<double>::infinity();
    Rng rng(seed);
    Eigen::VectorXd w(coeffs.size());
    for (Index t = 0; t < trials; ++t) {
        for (Index j = 0; j < w.size(); ++j) w[j] = -std::log(uniform_open(rng));
        w *= scale_c / w.sum();
        const double margin = dual_norm_sq(coeffs, w) - rep.objective_star;
        rep.min_margin = std::min(rep.min_margin, margin);
    }
    if (trials == 0) rep.min_margin = 0.0;
    rep.passed = rep.min_margin >= 0.0;
    return rep;
}

}  // namespace curematch
