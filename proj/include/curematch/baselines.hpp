#pragma once

// Comparator estimators: Cox proportional hazards without matching, and KNN
// matching on propensity scores, prognostic scores, selected features, or
// plain Euclidean distance. Matched baselines use one set of groups for both
// estimands.

#include <Eigen/Core>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "curematch/data.hpp"
#include "curematch/error.hpp"
#include "curematch/logistic.hpp"
#include "curematch/matching.hpp"
#include "curematch/metric.hpp"
#include "curematch/survival.hpp"

namespace curematch {

/// Proportional hazards fit. Covariates are centred internally; the linear
/// predictor and the baseline hazard refer to centred covariates.
struct CoxFit {
    Eigen::VectorXd coef;
    Eigen::VectorXd center;
    std::vector<double> event_times;  // distinct, increasing
    std::vector<double> cum_hazard;   // Breslow baseline at each event time
    bool converged = false;
    int iterations = 0;
    double grad_norm = 0.0;
    double loglik = 0.0;

    [[nodiscard]] double linear_predictor(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
        return (x - center.transpose()).dot(coef.transpose());
    }

    /// Baseline cumulative hazard at t (right-continuous step).
    [[nodiscard]] double baseline_at(double t) const {
        auto it = std::upper_bound(event_times.begin(), event_times.end(), t);
        if (it == event_times.begin()) return 0.0;
        return cum_hazard[static_cast<std::size_t>(it - event_times.begin() - 1)];
    }

    [[nodiscard]] double survival(double t, const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
        return std::exp(-baseline_at(t) * std::exp(linear_predictor(x)));
    }
};

struct CoxOptions {
    int max_iter = 50;
    double tol = 1e-8;  // sup-norm of the summed score
};

namespace detail {

struct CoxPass {
    double loglik = 0.0;
    Eigen::VectorXd grad;
    Eigen::MatrixXd info;
};

/// One sweep over subjects in decreasing time order accumulating the risk-set
/// sums; Breslow handling of tied event times.
inline CoxPass cox_pass(const Eigen::MatrixXd& xc, const Eigen::VectorXd& y, const std::vector<int>& delta,
                        const std::vector<Index>& order_desc, const Eigen::VectorXd& b, bool with_info) {
    const Index p = xc.cols();
    CoxPass out;
    out.grad = Eigen::VectorXd::Zero(p);
    if (with_info) out.info = Eigen::MatrixXd::Zero(p, p);
    const Eigen::VectorXd eta = xc * b;
    double s0 = 0.0;
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
    const auto n = order_desc.size();
    std::size_t k = 0;
    while (k < n) {
        const double t = y[order_desc[k]];
        int d = 0;
        Eigen::VectorXd xs = Eigen::VectorXd::Zero(p);
        double eta_sum = 0.0;
        for (; k < n && y[order_desc[k]] == t; ++k) {
            const Index i = order_desc[k];
            const double w = std::exp(eta[i]);
            s0 += w;
            s1.noalias() += w * xc.row(i).transpose();
            if (with_info) s2.noalias() += w * xc.row(i).transpose() * xc.row(i);
            if (delta[static_cast<std::size_t>(i)]) {
                ++d;
                xs += xc.row(i).transpose();
                eta_sum += eta[i];
            }
        }
        if (d == 0) continue;
        const Eigen::VectorXd mean = s1 / s0;
        out.loglik += eta_sum - d * std::log(s0);
        out.grad += xs - d * mean;
        if (with_info) out.info.noalias() += d * (s2 / s0 - mean * mean.transpose());
    }
    return out;
}

}  // namespace detail

/// Newton-Raphson on the Breslow partial likelihood with step halving, then
/// the Breslow baseline cumulative hazard.
inline CoxFit fit_cox(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<int>& delta,
                      const CoxOptions& opt = {}) {
    const Index n = x.rows();
    const Index p = x.cols();
    if (n == 0 || y.size() != n || static_cast<Index>(delta.size()) != n) {
        throw DataError("fit_cox: empty or mismatched input");
    }
    if (std::none_of(delta.begin(), delta.end(), [](int d) { return d == 1; })) {
        throw DataError("fit_cox: no events");
    }
    CoxFit fit;
    fit.center = x.colwise().mean().transpose();
    const Eigen::MatrixXd xc = x.rowwise() - fit.center.transpose();
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return y[a] > y[b]; });

    Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
    detail::CoxPass cur = detail::cox_pass(xc, y, delta, order, b, true);
    for (int it = 0; it < opt.max_iter; ++it) {
        fit.iterations = it;
        fit.grad_norm = p ? cur.grad.cwiseAbs().maxCoeff() : 0.0;
        if (fit.grad_norm < opt.tol) {
            fit.converged = true;
            break;
        }
        const Eigen::VectorXd step = cur.info.completeOrthogonalDecomposition().solve(cur.grad);
        if (!step.allFinite()) break;
        double t = 1.0;
        bool moved = false;
        for (int h = 0; h < 40; ++h) {
            const Eigen::VectorXd cand = b + t * step;
            detail::CoxPass next = detail::cox_pass(xc, y, delta, order, cand, true);
            if (std::isfinite(next.loglik) && next.loglik >= cur.loglik - 1e-12 * std::abs(cur.loglik)) {
                b = cand;
                cur = std::move(next);
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if (!moved) break;
    }
    fit.grad_norm = p ? cur.grad.cwiseAbs().maxCoeff() : 0.0;
    fit.converged = fit.grad_norm < opt.tol;
    if (!fit.converged) {
        throw NumericalError("fit_cox: Newton-Raphson did not converge (score sup-norm " +
                             std::to_string(fit.grad_norm) + ")");
    }
    fit.coef = b;
    fit.loglik = cur.loglik;

    // Breslow baseline hazard at increasing event times.
    const Eigen::VectorXd w = (xc * b).array().exp();
    double s0 = 0.0;
    std::vector<std::pair<double, double>> steps;  // (time, d / s0), built in decreasing time
    std::size_t k = 0;
    while (k < order.size()) {
        const double t = y[order[k]];
        int d = 0;
        for (; k < order.size() && y[order[k]] == t; ++k) {
            s0 += w[order[k]];
            d += delta[static_cast<std::size_t>(order[k])];
        }
        if (d > 0) steps.emplace_back(t, d / s0);
    }
    std::reverse(steps.begin(), steps.end());
    double cum = 0.0;
    for (auto [t, dh] : steps) {
        cum += dh;
        fit.event_times.push_back(t);
        fit.cum_hazard.push_back(cum);
    }
    return fit;
}

inline CoxFit fit_cox(const Cohort& c, const IndexList& rows, const CoxOptions& opt = {}) {
    Eigen::MatrixXd x(static_cast<Index>(rows.size()), c.num_covariates());
    Eigen::VectorXd y(static_cast<Index>(rows.size()));
    std::vector<int> d(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        x.row(static_cast<Index>(k)) = c.x().row(rows[k]);
        y[static_cast<Index>(k)] = c.y()[rows[k]];
        d[k] = c.delta()[static_cast<std::size_t>(rows[k])];
    }
    return fit_cox(x, y, d, opt);
}

/// F = S(H) and G = integral of S over [0, H] for the Cox curve at x.
inline ArmSummary cox_summary(const CoxFit& fit, const Eigen::Ref<const Eigen::RowVectorXd>& x, double horizon_h) {
    const double r = std::exp(fit.linear_predictor(x));
    double area = 0.0;
    double prev = 0.0;
    double level = 1.0;
    for (std::size_t k = 0; k < fit.event_times.size() && fit.event_times[k] <= horizon_h; ++k) {
        area += (fit.event_times[k] - prev) * level;
        prev = fit.event_times[k];
        level = std::exp(-fit.cum_hazard[k] * r);
    }
    area += (horizon_h - prev) * level;
    return {level, area, cmet_from_functionals(level, area, horizon_h)};
}

/// Arm-specific Cox models on the training set, evaluated at every
/// estimation subject.
inline std::vector<HteRecord> cox_nomatch_hte(const Cohort& c, const Split& split) {
    const CoxFit f1 = fit_cox(c, rows_in_arm(c, split.train_idx, 1));
    const CoxFit f0 = fit_cox(c, rows_in_arm(c, split.train_idx, 0));
    std::vector<HteRecord> out;
    out.reserve(split.est_idx.size());
    for (Index i : split.est_idx) {
        const ArmSummary a1 = cox_summary(f1, c.x().row(i), c.horizon());
        const ArmSummary a0 = cox_summary(f0, c.x().row(i), c.horizon());
        HteRecord r;
        r.subject_idx = i;
        r.s1_h = a1.surv_h;
        r.s0_h = a0.surv_h;
        r.hte_cure = a1.surv_h - a0.surv_h;
        if (a1.cmet && a0.cmet) {
            r.hte_time = *a1.cmet - *a0.cmet;
            r.time_valid = true;
        }
        out.push_back(r);
    }
    return out;
}

/// Estimates from one set of matched groups used for both estimands.
inline std::vector<HteRecord> estimate_from_groups(const Cohort& c, const std::vector<MatchedGroup>& groups) {
    std::vector<HteRecord> out;
    out.reserve(groups.size());
    for (const auto& g : groups) out.push_back(estimate_hte(g, g, c));
    return out;
}

/// Estimates from separate cure-metric and time-metric groups.
inline std::vector<HteRecord> estimate_from_groups(const Cohort& c, const std::vector<MatchedGroup>& cure,
                                                   const std::vector<MatchedGroup>& time) {
    if (cure.size() != time.size()) throw DataError("estimate_from_groups: group lists differ in length");
    std::vector<HteRecord> out;
    out.reserve(cure.size());
    for (std::size_t i = 0; i < cure.size(); ++i) out.push_back(estimate_hte(cure[i], time[i], c));
    return out;
}

/// Matching on a single score column with unit weight.
inline std::vector<MatchedGroup> score_match(const Cohort& c, const Split& split, const Eigen::VectorXd& score,
                                             WeightKind kind, Index k, int jobs) {
    const Eigen::MatrixXd feat = score;
    return knn_match(feat, c.z(), split.est_idx, split.est_idx,
                     WeightMatrix(Eigen::VectorXd::Ones(1), kind, "score"), k, jobs);
}

enum class PropensityScale { probability, logit };

/// Logistic propensity model on the training set.
inline Eigen::VectorXd propensity_scores(const Cohort& c, const Split& split,
                                         PropensityScale scale = PropensityScale::probability) {
    Eigen::MatrixXd xt(static_cast<Index>(split.train_idx.size()), c.num_covariates());
    std::vector<int> zt(split.train_idx.size());
    for (std::size_t k = 0; k < split.train_idx.size(); ++k) {
        xt.row(static_cast<Index>(k)) = c.x().row(split.train_idx[k]);
        zt[k] = c.z()[static_cast<std::size_t>(split.train_idx[k])];
    }
    const LogisticFit lf = fit_logistic(xt, zt);
    Eigen::VectorXd s(c.size());
    for (Index i = 0; i < c.size(); ++i) {
        const double lin = lf.linear_predictor(c.x().row(i));
        s[i] = scale == PropensityScale::probability ? expit(lin) : lin;
    }
    return s;
}

inline std::vector<HteRecord> propensity_match_hte(const Cohort& c, const Split& split, Index k, int jobs = 1,
                                                   PropensityScale scale = PropensityScale::probability) {
    return estimate_from_groups(c, score_match(c, split, propensity_scores(c, split, scale), WeightKind::custom, k, jobs));
}

/// Cox linear predictor from the control arm's training rows.
inline Eigen::VectorXd prognostic_scores(const Cohort& c, const Split& split) {
    const CoxFit f = fit_cox(c, rows_in_arm(c, split.train_idx, 0));
    Eigen::VectorXd s(c.size());
    for (Index i = 0; i < c.size(); ++i) s[i] = c.x().row(i).dot(f.coef.transpose());
    return s;
}

inline std::vector<HteRecord> prognostic_match_hte(const Cohort& c, const Split& split, Index k, int jobs = 1) {
    return estimate_from_groups(c, score_match(c, split, prognostic_scores(c, split), WeightKind::custom, k, jobs));
}

inline std::vector<HteRecord> euclidean_match_hte(const Cohort& c, const Split& split, Index k, int jobs = 1) {
    return estimate_from_groups(c, knn_match(c, split, WeightMatrix::unit(c.num_covariates()), k, jobs));
}

/// Pooled Cox model on the training set with treatment as an extra
/// covariate; keeps covariates whose |coefficient x SD| is above the median.
inline WeightMatrix feature_selection_weights(const Cohort& c, const Split& split) {
    const Index p = c.num_covariates();
    const auto m = static_cast<Index>(split.train_idx.size());
    Eigen::MatrixXd x(m, p + 1);
    Eigen::VectorXd y(m);
    std::vector<int> d(static_cast<std::size_t>(m));
    for (Index k = 0; k < m; ++k) {
        const Index i = split.train_idx[static_cast<std::size_t>(k)];
        x.row(k).head(p) = c.x().row(i);
        x(k, p) = c.z()[static_cast<std::size_t>(i)];
        y[k] = c.y()[i];
        d[static_cast<std::size_t>(k)] = c.delta()[static_cast<std::size_t>(i)];
    }
    const CoxFit f = fit_cox(x, y, d);
    std::vector<double> score(static_cast<std::size_t>(p));
    for (Index j = 0; j < p; ++j) {
        const auto col = x.col(j);
        const double mean = col.mean();
        const double sd = std::sqrt((col.array() - mean).square().sum() / static_cast<double>(std::max<Index>(1, m - 1)));
        score[static_cast<std::size_t>(j)] = std::abs(f.coef[j] * sd);
    }
    std::vector<double> sorted = score;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t h = sorted.size() / 2;
    const double median = sorted.size() % 2 ? sorted[h] : 0.5 * (sorted[h - 1] + sorted[h]);
    Eigen::VectorXd w = Eigen::VectorXd::Zero(p);
    for (Index j = 0; j < p; ++j) {
        if (score[static_cast<std::size_t>(j)] > median) w[j] = 1.0;
    }
    if (!(w.array() > 0.0).any()) w.setOnes();  // all scores tied
    return {w, WeightKind::custom, "pooled Cox feature selection"};
}

inline std::vector<HteRecord> feature_select_match_hte(const Cohort& c, const Split& split, Index k, int jobs = 1) {
    return estimate_from_groups(c, knn_match(c, split, feature_selection_weights(c, split), k, jobs));
}

}  // namespace curematch
