#pragma once

// Two-part mixture cure model fitted per treatment arm:
//   P(E = 1 | x) = expit(beta0 + x'beta)             (uncured / event before H)
//   log T | E = 1, x ~ N(lambda0 + x'lambda, sigma^2) truncated to (0, H)
// The observable log-likelihood drops the censoring factors:
//   delta = 1        : log q + log f(y) - log F(H)
//   delta = 0, y < H : log(q (1 - F(y)/F(H)) + 1 - q)
//   delta = 0, y = H : log(1 - q)

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "curematch/data.hpp"
#include "curematch/distributions.hpp"
#include "curematch/error.hpp"
#include "curematch/logistic.hpp"
#include "curematch/rng.hpp"

namespace curematch {

struct McmParams {
    double beta0 = 0.0;
    Eigen::VectorXd beta;
    double lambda0 = 0.0;
    Eigen::VectorXd lambda;
    double log_sigma = 0.0;

    static McmParams zeros(Index p) {
        return {0.0, Eigen::VectorXd::Zero(p), 0.0, Eigen::VectorXd::Zero(p), 0.0};
    }

    [[nodiscard]] Index num_covariates() const noexcept { return beta.size(); }
    [[nodiscard]] double sigma() const noexcept { return std::exp(log_sigma); }

    /// Layout: beta0, beta, lambda0, lambda, log_sigma.
    [[nodiscard]] Eigen::VectorXd pack() const {
        const Index p = beta.size();
        Eigen::VectorXd th(2 * p + 3);
        th[0] = beta0;
        th.segment(1, p) = beta;
        th[p + 1] = lambda0;
        th.segment(p + 2, p) = lambda;
        th[2 * p + 2] = log_sigma;
        return th;
    }

    static McmParams unpack(const Eigen::VectorXd& th) {
        const Index p = (th.size() - 3) / 2;
        if (th.size() != 2 * p + 3) throw DataError("McmParams: bad parameter vector length");
        return {th[0], th.segment(1, p), th[p + 1], th.segment(p + 2, p), th[2 * p + 2]};
    }
};

inline void to_json(nlohmann::json& j, const McmParams& m) {
    j = {{"beta0", m.beta0},
         {"beta", std::vector<double>(m.beta.begin(), m.beta.end())},
         {"lambda0", m.lambda0},
         {"lambda", std::vector<double>(m.lambda.begin(), m.lambda.end())},
         {"log_sigma", m.log_sigma}};
}

inline void from_json(const nlohmann::json& j, McmParams& m) {
    auto vec = [](const std::vector<double>& v) {
        return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size())));
    };
    m.beta0 = j.at("beta0").get<double>();
    m.beta = vec(j.at("beta").get<std::vector<double>>());
    m.lambda0 = j.at("lambda0").get<double>();
    m.lambda = vec(j.at("lambda").get<std::vector<double>>());
    m.log_sigma = j.at("log_sigma").get<double>();
}

struct FitConfig {
    double tol = 1e-6;  // sup-norm of the summed log-likelihood gradient
    int max_iter = 500;
    int n_restarts = 5;
    std::uint64_t seed = 1;
};

inline void to_json(nlohmann::json& j, const FitConfig& c) {
    j = {{"tol", c.tol}, {"max_iter", c.max_iter}, {"n_restarts", c.n_restarts}, {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, FitConfig& c) {
    const FitConfig d;
    c.tol = j.value("tol", d.tol);
    c.max_iter = j.value("max_iter", d.max_iter);
    c.n_restarts = j.value("n_restarts", d.n_restarts);
    c.seed = j.value("seed", d.seed);
}

struct MixtureCureFit {
    McmParams params;
    int arm = 0;
    double loglik = -std::numeric_limits<double>::infinity();
    bool converged = false;
    int n_restarts_used = 0;
    double grad_norm = std::numeric_limits<double>::infinity();
    Index n_train = 0;
    Index n_events = 0;
    bool aft_identified = true;  // false when the slice holds no events
    std::vector<std::string> warnings;
};

inline void to_json(nlohmann::json& j, const MixtureCureFit& f) {
    j = {{"arm", f.arm},
         {"params", f.params},
         {"loglik", f.loglik},
         {"converged", f.converged},
         {"n_restarts_used", f.n_restarts_used},
         {"grad_norm", f.grad_norm},
         {"n_train", f.n_train},
         {"n_events", f.n_events},
         {"aft_identified", f.aft_identified},
         {"warnings", f.warnings}};
}

inline void from_json(const nlohmann::json& j, MixtureCureFit& f) {
    f.arm = j.at("arm").get<int>();
    f.params = j.at("params").get<McmParams>();
    f.loglik = j.at("loglik").get<double>();
    f.converged = j.at("converged").get<bool>();
    f.n_restarts_used = j.at("n_restarts_used").get<int>();
    f.grad_norm = j.at("grad_norm").get<double>();
    f.n_train = j.value("n_train", Index{0});
    f.n_events = j.value("n_events", Index{0});
    f.aft_identified = j.value("aft_identified", true);
    f.warnings = j.value("warnings", std::vector<std::string>{});
}

/// Rows of one arm prepared for repeated likelihood evaluation.
class McmData {
public:
    McmData(Eigen::MatrixXd x, Eigen::VectorXd y, std::vector<int> delta, double horizon_h)
        : x_(std::move(x)), y_(std::move(y)), delta_(std::move(delta)), horizon_h_(horizon_h) {
        if (x_.rows() == 0) throw DataError("mixture cure: empty slice");
        if (y_.size() != x_.rows() || static_cast<Index>(delta_.size()) != x_.rows()) {
            throw DataError("mixture cure: slice length mismatch");
        }
        log_y_ = y_.array().log();
        log_h_ = std::log(horizon_h_);
    }

    static McmData from_cohort(const Cohort& c, const IndexList& rows) {
        Eigen::MatrixXd x(static_cast<Index>(rows.size()), c.num_covariates());
        Eigen::VectorXd y(static_cast<Index>(rows.size()));
        std::vector<int> d(rows.size());
        for (std::size_t k = 0; k < rows.size(); ++k) {
            const Index i = rows[k];
            x.row(static_cast<Index>(k)) = c.x().row(i);
            y[static_cast<Index>(k)] = c.y()[i];
            d[k] = c.delta()[static_cast<std::size_t>(i)];
        }
        return {std::move(x), std::move(y), std::move(d), c.horizon()};
    }

    [[nodiscard]] const Eigen::MatrixXd& x() const noexcept { return x_; }
    [[nodiscard]] const Eigen::VectorXd& y() const noexcept { return y_; }
    [[nodiscard]] const std::vector<int>& delta() const noexcept { return delta_; }
    [[nodiscard]] double horizon() const noexcept { return horizon_h_; }
    [[nodiscard]] Index rows() const noexcept { return x_.rows(); }
    [[nodiscard]] Index cols() const noexcept { return x_.cols(); }

    /// Summed log-likelihood; fills `grad` (same layout as McmParams::pack)
    /// when non-null. Returns -inf if any row's F(H) underflows, recording
    /// that row in `bad_row` when provided.
    double loglik(const Eigen::VectorXd& theta, Eigen::VectorXd* grad = nullptr,
                  Index* bad_row = nullptr) const {
        const Index p = cols();
        const Index n = rows();
        const double b0 = theta[0];
        const double l0 = theta[p + 1];
        const double s = theta[2 * p + 2];
        const double sigma = std::exp(s);
        const Eigen::VectorXd a = (x_ * theta.segment(1, p)).array() + b0;
        const Eigen::VectorXd eta = (x_ * theta.segment(p + 2, p)).array() + l0;
        Eigen::VectorXd da;
        Eigen::VectorXd de;
        if (grad) {
            da.resize(n);
            de.resize(n);
        }
        double ds = 0.0;
        double total = 0.0;
        for (Index i = 0; i < n; ++i) {
            const int d = delta_[static_cast<std::size_t>(i)];
            if (d == 0 && y_[i] >= horizon_h_) {
                total += log_expit(-a[i]);
                if (grad) {
                    da[i] = -expit(a[i]);
                    de[i] = 0.0;
                }
                continue;
            }
            const double zh = (log_h_ - eta[i]) / sigma;
            const double log_fh = log_norm_cdf(zh);
            if (!(log_fh > -std::numeric_limits<double>::infinity()) || !std::isfinite(zh)) {
                if (bad_row) *bad_row = i;
                return -std::numeric_limits<double>::infinity();
            }
            const double u = (log_y_[i] - eta[i]) / sigma;
            if (d == 1) {
                total += log_expit(a[i]) + log_norm_pdf(u) - s - log_y_[i] - log_fh;
                if (grad) {
                    const double mh = inv_mills(zh);
                    da[i] = expit(-a[i]);
                    de[i] = (u + mh) / sigma;
                    ds += -1.0 + u * u + zh * mh;
                }
            } else {
                // log(1 - r) with r = Phi(u) / Phi(zh), via the better-conditioned tail.
                const double log_r = log_norm_cdf(u) - log_fh;
                double log_1mr;
                if (u > 0.0) {
                    const double lqu = log_norm_cdf(-u);
                    const double lqh = log_norm_cdf(-zh);
                    log_1mr = lqu + std::log(-std::expm1(lqh - lqu)) - log_fh;
                } else {
                    log_1mr = std::log(-std::expm1(log_r));
                }
                const double lq = log_expit(a[i]);
                const double l1q = log_expit(-a[i]);
                const double t1 = lq + log_1mr;
                const double hi = std::max(t1, l1q);
                const double ll = hi + std::log(std::exp(t1 - hi) + std::exp(l1q - hi));
                total += ll;
                if (grad) {
                    // D = 1 - q r = exp(ll)
                    const double inv_d = std::exp(-ll);
                    const double q = std::exp(lq);
                    const double r = std::exp(log_r);
                    const double mh = inv_mills(zh);
                    const double phi_u_over_fh = std::exp(log_norm_pdf(u) - log_fh);
                    da[i] = -r * q * std::exp(l1q) * inv_d;
                    de[i] = -q * (r * mh - phi_u_over_fh) / sigma * inv_d;
                    ds += -q * (r * zh * mh - u * phi_u_over_fh) * inv_d;
                }
            }
        }
        if (grad) {
            grad->resize(2 * p + 3);
            (*grad)[0] = da.sum();
            grad->segment(1, p) = x_.transpose() * da;
            (*grad)[p + 1] = de.sum();
            grad->segment(p + 2, p) = x_.transpose() * de;
            (*grad)[2 * p + 2] = ds;
        }
        return total;
    }

private:
    Eigen::MatrixXd x_;
    Eigen::VectorXd y_;
    std::vector<int> delta_;
    double horizon_h_;
    Eigen::VectorXd log_y_;
    double log_h_ = 0.0;
};

/// Observable log-likelihood of `params` on one arm's rows.
inline double obs_loglik(const McmParams& params, const McmData& data) {
    if (params.beta.size() != data.cols() || params.lambda.size() != data.cols()) {
        throw DataError("obs_loglik: parameter length does not match covariates");
    }
    Index bad = -1;
    const double ll = data.loglik(params.pack(), nullptr, &bad);
    if (bad >= 0) {
        throw NumericalError("obs_loglik: F_T(H | x) is numerically zero at row " + std::to_string(bad + 1));
    }
    return ll;
}

namespace detail {

struct OptResult {
    Eigen::VectorXd theta;
    double loglik;
    double grad_norm;
};

/// BFGS on the mean negative log-likelihood with Armijo backtracking,
/// followed by Newton steps on a finite-difference Hessian of the analytic
/// gradient to drive the summed gradient below `tol`.
inline OptResult maximize_loglik(const McmData& data, Eigen::VectorXd theta, const FitConfig& cfg) {
    const Index k = theta.size();
    const double m = static_cast<double>(data.rows());
    auto eval = [&](const Eigen::VectorXd& th, Eigen::VectorXd& g) {
        const double ll = data.loglik(th, &g);
        g = -g / m;
        return -ll / m;
    };

    Eigen::VectorXd g(k);
    double f = eval(theta, g);
    if (!std::isfinite(f)) return {theta, -std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    const double tol_mean = cfg.tol / m;
    // BFGS only needs to reach the basin; Newton steps finish the job.
    const double handoff = std::max(tol_mean, 1e-5);

    Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(k, k);
    bool first = true;
    Eigen::VectorXd g_new(k);
    for (int it = 0; it < cfg.max_iter; ++it) {
        if (g.cwiseAbs().maxCoeff() < handoff) break;
        Eigen::VectorXd dir = -hinv * g;
        double slope = dir.dot(g);
        if (!(slope < 0.0)) {
            hinv.setIdentity();
            dir = -g;
            slope = -g.squaredNorm();
            first = true;
        }
        if (first) {
            const double scale = 1.0 / std::max(1.0, dir.cwiseAbs().maxCoeff());
            dir *= scale;
            slope *= scale;
        }
        double step = 1.0;
        Eigen::VectorXd th_new;
        double f_new = std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            th_new = theta + step * dir;
            f_new = eval(th_new, g_new);
            if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
        const Eigen::VectorXd s = th_new - theta;
        const Eigen::VectorXd yv = g_new - g;
        const double sy = s.dot(yv);
        if (sy > 1e-14 * s.norm() * yv.norm()) {
            if (first) {
                hinv = Eigen::MatrixXd::Identity(k, k) * (sy / yv.squaredNorm());
                first = false;
            }
            const double rho = 1.0 / sy;
            const Eigen::VectorXd hy = hinv * yv;
            hinv += (rho * rho * yv.dot(hy) + rho) * (s * s.transpose()) -
                    rho * (hy * s.transpose() + s * hy.transpose());
        }
        theta = th_new;
        f = f_new;
        g = g_new;
    }

    // Newton polish.
    for (int it = 0; it < 25 && g.cwiseAbs().maxCoeff() * m >= cfg.tol; ++it) {
        Eigen::MatrixXd hess(k, k);
        Eigen::VectorXd gp(k);
        Eigen::VectorXd gm(k);
        bool ok = true;
        for (Index j = 0; j < k; ++j) {
            const double h = 1e-5 * std::max(1.0, std::abs(theta[j]));
            Eigen::VectorXd tp = theta;
            Eigen::VectorXd tm = theta;
            tp[j] += h;
            tm[j] -= h;
            const double fp = eval(tp, gp);
            const double fm = eval(tm, gm);
            if (!std::isfinite(fp) || !std::isfinite(fm)) {
                ok = false;
                break;
            }
            hess.col(j) = (gp - gm) / (2.0 * h);
        }
        if (!ok) break;
        hess = 0.5 * (hess + hess.transpose()).eval();
        // Ridge until the factorisation is positive definite.
        double ridge = 0.0;
        Eigen::VectorXd dir;
        for (int tries = 0; tries < 30; ++tries) {
            Eigen::LLT<Eigen::MatrixXd> llt(hess + ridge * Eigen::MatrixXd::Identity(k, k));
            if (llt.info() == Eigen::Success) {
                dir = -llt.solve(g);
                break;
            }
            ridge = ridge == 0.0 ? 1e-8 * std::max(1.0, hess.diagonal().cwiseAbs().maxCoeff()) : ridge * 10.0;
        }
        if (dir.size() == 0 || !dir.allFinite()) break;
        double step = 1.0;
        bool accepted = false;
        Eigen::VectorXd th_new;
        double f_new = 0.0;
        for (int ls = 0; ls < 30; ++ls) {
            th_new = theta + step * dir;
            f_new = eval(th_new, g_new);
            const bool f_ok = std::isfinite(f_new) && f_new <= f + 1e-12 * std::max(1.0, std::abs(f));
            if (f_ok && g_new.cwiseAbs().maxCoeff() < g.cwiseAbs().maxCoeff()) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
        theta = th_new;
        f = f_new;
        g = g_new;
    }
    return {theta, -f * m, g.cwiseAbs().maxCoeff() * m};
}

}  // namespace detail

/// Maximum-likelihood fit on one arm's slice with multiple starts.
/// Start order: warm start from a logistic fit of delta plus least squares of
/// log y on events; all zeros; logistic warm start alone; two random
/// perturbations of the first.
inline MixtureCureFit fit_mcm(const McmData& data, int arm, const FitConfig& cfg = {}) {
    const Index p = data.cols();
    const Index n = data.rows();
    MixtureCureFit out;
    out.arm = arm;
    out.n_train = n;
    for (int d : data.delta()) out.n_events += d;
    out.aft_identified = out.n_events > 0;
    if (n < 10 * (p + 2)) {
        out.warnings.push_back("training slice has " + std::to_string(n) + " rows; fewer than 10(p+2) = " +
                               std::to_string(10 * (p + 2)));
    }
    if (!out.aft_identified) out.warnings.push_back("no events in slice: time model is not identified");

    McmParams cure_warm = McmParams::zeros(p);
    bool have_cure_warm = false;
    if (out.n_events > 0 && out.n_events < n) {
        try {
            const LogisticFit lf = fit_logistic(data.x(), data.delta());
            if (lf.coef.allFinite()) {
                cure_warm.beta0 = lf.intercept;
                cure_warm.beta = lf.coef;
                have_cure_warm = true;
            }
        } catch (const Error&) {
        }
    }
    McmParams both_warm = cure_warm;
    if (out.n_events > p + 1) {
        Eigen::MatrixXd a(out.n_events, p + 1);
        Eigen::VectorXd ly(out.n_events);
        Index r = 0;
        for (Index i = 0; i < n; ++i) {
            if (!data.delta()[static_cast<std::size_t>(i)]) continue;
            a(r, 0) = 1.0;
            a.row(r).tail(p) = data.x().row(i);
            ly[r] = std::log(data.y()[i]);
            ++r;
        }
        const Eigen::VectorXd coef = a.colPivHouseholderQr().solve(ly);
        if (coef.allFinite()) {
            const double rss = (ly - a * coef).squaredNorm();
            const double sd = std::sqrt(rss / static_cast<double>(std::max<Index>(1, out.n_events - p - 1)));
            both_warm.lambda0 = coef[0];
            both_warm.lambda = coef.tail(p);
            both_warm.log_sigma = std::log(std::max(sd, 1e-3));
        }
    } else if (out.n_events > 0) {
        double mean = 0.0;
        for (Index i = 0; i < n; ++i) {
            if (data.delta()[static_cast<std::size_t>(i)]) mean += std::log(data.y()[i]);
        }
        both_warm.lambda0 = mean / static_cast<double>(out.n_events);
    }

    std::vector<Eigen::VectorXd> starts;
    starts.push_back(both_warm.pack());
    starts.push_back(McmParams::zeros(p).pack());
    if (have_cure_warm) starts.push_back(cure_warm.pack());
    Rng rng(derive_seed(cfg.seed, {0x3c3u, static_cast<std::uint64_t>(arm)}));
    while (static_cast<int>(starts.size()) < std::max(cfg.n_restarts, 1)) {
        Eigen::VectorXd th = both_warm.pack();
        for (Index j = 0; j < th.size(); ++j) th[j] += 0.3 * norm_quantile(uniform_open(rng));
        starts.push_back(std::move(th));
    }
    starts.resize(static_cast<std::size_t>(std::max(cfg.n_restarts, 1)));

    std::optional<detail::OptResult> best;
    for (const auto& th0 : starts) {
        ++out.n_restarts_used;
        detail::OptResult r = detail::maximize_loglik(data, th0, cfg);
        if (!std::isfinite(r.loglik)) continue;
        if (!best || r.loglik > best->loglik) best = std::move(r);
    }
    if (!best) throw NumericalError("fit_mcm: non-finite likelihood at every start (arm " + std::to_string(arm) + ")");
    out.params = McmParams::unpack(best->theta);
    out.loglik = best->loglik;
    out.grad_norm = best->grad_norm;
    out.converged = best->grad_norm < cfg.tol;
    return out;
}

/// Fits the mixture cure model on the training rows of `arm`.
inline MixtureCureFit fit_mcm(const Cohort& cohort, const Split& split, int arm, const FitConfig& cfg = {}) {
    const IndexList rows = rows_in_arm(cohort, split.train_idx, arm);
    if (rows.empty()) throw DataError("fit_mcm: no training rows in arm " + std::to_string(arm));
    return fit_mcm(McmData::from_cohort(cohort, rows), arm, cfg);
}

}  // namespace curematch
