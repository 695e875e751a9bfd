#pragma once

// Brute-force reference implementations used by the unit and acceptance
// tests. None of them call into the library code they check.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <utility>
#include <vector>

namespace oracle {

using Index = Eigen::Index;

/// k nearest rows of each arm in `pool` for every query, by sorting all
/// (distance, index) pairs.
struct Neighbours {
    std::vector<Index> treated;
    std::vector<Index> control;
};

inline std::vector<Neighbours> knn(const Eigen::MatrixXd& x, const std::vector<int>& z, const std::vector<Index>& pool,
                                   const std::vector<Index>& queries, const Eigen::VectorXd& w, Index k) {
    std::vector<Neighbours> out;
    for (Index q : queries) {
        std::vector<std::pair<double, Index>> d1, d0;
        for (Index i : pool) {
            double s = 0.0;
            for (Index j = 0; j < x.cols(); ++j) {
                const double d = x(q, j) - x(i, j);
                s += w[j] * (d * d);
            }
            (z[static_cast<std::size_t>(i)] == 1 ? d1 : d0).emplace_back(s, i);
        }
        std::sort(d1.begin(), d1.end());
        std::sort(d0.begin(), d0.end());
        Neighbours nb;
        for (Index r = 0; r < k; ++r) {
            nb.treated.push_back(d1[static_cast<std::size_t>(r)].second);
            nb.control.push_back(d0[static_cast<std::size_t>(r)].second);
        }
        out.push_back(std::move(nb));
    }
    return out;
}

/// Product-limit estimator written from the definition: at each distinct
/// event time t, S *= 1 - d(t) / n(t) with n(t) = #{y >= t}.
struct KmOracle {
    double surv_h = 1.0;
    double area = 0.0;
};

inline KmOracle km(const std::vector<double>& y, const std::vector<int>& delta, double h) {
    std::set<double> times;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (delta[i] == 1 && y[i] < h) times.insert(y[i]);
    }
    KmOracle o;
    double s = 1.0;
    double prev = 0.0;
    for (double t : times) {
        o.area += s * (t - prev);
        double at_risk = 0.0;
        double events = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (y[i] >= t) at_risk += 1.0;
            if (y[i] == t && delta[i] == 1) events += 1.0;
        }
        s *= 1.0 - events / at_risk;
        prev = t;
    }
    o.area += s * (h - prev);
    o.surv_h = s;
    return o;
}

/// Bernoulli log-likelihood of an intercept + slope logistic model.
inline double logistic_loglik(double b0, double b1, const std::vector<double>& x, const std::vector<int>& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double eta = b0 + b1 * x[i];
        const double p = 1.0 / (1.0 + std::exp(-eta));
        s += y[i] ? std::log(p) : std::log1p(-p);
    }
    return s;
}

/// Breslow partial log-likelihood for one covariate, O(n^2).
inline double cox_loglik(double beta, const std::vector<double>& x, const std::vector<double>& y,
                         const std::vector<int>& delta) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!delta[i]) continue;
        double risk = 0.0;
        for (std::size_t j = 0; j < y.size(); ++j) {
            if (y[j] >= y[i]) risk += std::exp(beta * x[j]);
        }
        s += beta * x[i] - std::log(risk);
    }
    return s;
}

/// Mixture cure log-likelihood for one covariate, written from the model:
/// uncured with probability q = expit(b0 + b1 x), log T ~ N(l0 + l1 x, s^2)
/// truncated to T < h. Events contribute q f(t) / F(h); censored rows
/// before h contribute 1 - q + q (F(h) - F(t)) / F(h); rows at h contribute 1 - q.
inline double mcm_loglik(double b0, double b1, double l0, double l1, double log_s, const std::vector<double>& x,
                         const std::vector<double>& y, const std::vector<int>& delta, double h) {
    const double s = std::exp(log_s);
    auto cdf = [](double u) { return 0.5 * std::erfc(-u / std::sqrt(2.0)); };
    double ll = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double q = 1.0 / (1.0 + std::exp(-(b0 + b1 * x[i])));
        const double mu = l0 + l1 * x[i];
        const double fh = cdf((std::log(h) - mu) / s);
        if (delta[i] == 1) {
            const double u = (std::log(y[i]) - mu) / s;
            const double dens = std::exp(-0.5 * u * u) / (std::sqrt(2.0 * M_PI) * s * y[i]);
            ll += std::log(q * dens / fh);
        } else if (y[i] >= h) {
            ll += std::log(1.0 - q);
        } else {
            const double ft = cdf((std::log(y[i]) - mu) / s);
            ll += std::log(1.0 - q + q * (fh - ft) / fh);
        }
    }
    return ll;
}

/// Arg-max of f over a regular grid on a box; returns the best point and value.
template <class F>
std::pair<std::vector<double>, double> grid_argmax(F&& f, const std::vector<double>& lo, const std::vector<double>& hi,
                                                   const std::vector<int>& steps) {
    const std::size_t d = lo.size();
    std::vector<int> idx(d, 0);
    std::vector<double> pt(d), best(d);
    double best_v = -std::numeric_limits<double>::infinity();
    while (true) {
        for (std::size_t j = 0; j < d; ++j) pt[j] = lo[j] + (hi[j] - lo[j]) * idx[j] / steps[j];
        const double v = f(pt);
        if (v > best_v) {
            best_v = v;
            best = pt;
        }
        std::size_t j = 0;
        while (j < d && ++idx[j] > steps[j]) idx[j++] = 0;
        if (j == d) break;
    }
    return {best, best_v};
}

}  // namespace oracle
