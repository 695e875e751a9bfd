#pragma once

// Fast self-checks of the numerical kernels against independent oracles.
// Each check can be fed a deliberately corrupted value to prove it fails.

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <array>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "curematch/distributions.hpp"
#include "curematch/logistic.hpp"
#include "curematch/metric.hpp"
#include "curematch/rng.hpp"
#include "curematch/survival.hpp"

namespace curematch {

inline std::string sci(double v) {
    std::ostringstream o;
    o << std::scientific << std::setprecision(3) << v;
    return o.str();
}

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

inline constexpr std::array<std::string_view, 6> kCheckNames{"normal_cdf_symmetry", "expit_series", "trunc_mean_quadrature",
                                                             "km_hand_example",     "weight_optimality", "logistic_score"};

/// E[T | T < H] by adaptive quadrature over s = log t.
inline double trunc_mean_quadrature(double eta, double sigma, double horizon_h) {
    const double zh = (std::log(horizon_h) - eta) / sigma;
    auto f = [&](double s) { return std::exp(s) * norm_pdf((s - eta) / sigma) / sigma; };
    const double lo = eta - 40.0 * sigma;
    const double hi = std::log(horizon_h);
    double err = 0.0;
    const double num = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, hi, 25, 1e-14, &err);
    return num / norm_cdf(zh);
}

/// exp(-x) from its Taylor series in long double.
inline double exp_neg_series(double x) {
    long double term = 1.0L;
    long double sum = 1.0L;
    for (int k = 1; k <= 50; ++k) {
        term *= -static_cast<long double>(x) / k;
        sum += term;
    }
    return static_cast<double>(sum);
}

/// Runs the suite. `fault` names one check whose library value is perturbed.
inline std::vector<CheckResult> run_checks(std::string_view fault = {}) {
    std::vector<CheckResult> out;
    auto corrupt = [&](std::string_view name, double v) { return fault == name ? v * (1.0 + 1e-3) + 1e-3 : v; };

    {
        double worst = 0.0;
        for (double u = -10.0; u <= 10.0; u += 0.01) {
            worst = std::max(worst, std::abs(corrupt("normal_cdf_symmetry", norm_cdf(u)) + norm_cdf(-u) - 1.0));
        }
        out.push_back({"normal_cdf_symmetry", worst <= 1e-14, "max |Phi(u) + Phi(-u) - 1| = " + sci(worst)});
    }
    {
        const double oracle = 1.0 / (1.0 + exp_neg_series(0.7));
        const double d = std::abs(corrupt("expit_series", expit(0.7)) - oracle);
        out.push_back({"expit_series", d <= 1e-12, "|expit(0.7) - series| = " + sci(d)});
    }
    {
        Rng rng(20240601);
        double worst = 0.0;
        for (int t = 0; t < 200; ++t) {
            const double eta = 2.0 + 6.0 * uniform_open(rng);
            const double sigma = 0.3 + 1.7 * uniform_open(rng);
            const double h = 50.0 + 1500.0 * uniform_open(rng);
            const TruncLogNormal d{eta, sigma, h};
            if (d.mass_below_h() <= 1e-6) continue;
            const double q = trunc_mean_quadrature(eta, sigma, h);
            worst = std::max(worst, std::abs(corrupt("trunc_mean_quadrature", trunc_mean(d)) - q) / q);
        }
        out.push_back({"trunc_mean_quadrature", worst < 1e-8, "max relative error = " + sci(worst)});
    }
    {
        const std::vector<SurvObs> obs{{2, 1}, {3, 0}, {5, 1}, {7, 0}};
        const KmCurve km = km_fit(obs, 10.0);
        const double f = corrupt("km_hand_example", km_surv_at_h(km));
        const double g = km_integral(km);
        const auto cm = cmet_from_functionals(f, g, 10.0);
        const bool ok = std::abs(f - 0.375) < 1e-15 && std::abs(g - 6.125) < 1e-15 && cm && std::abs(*cm - 3.8) < 1e-12;
        out.push_back({"km_hand_example", ok, "F = " + sci(f) + ", G = " + sci(g)});
    }
    {
        const Eigen::Vector2d c(3.0, 1.0);
        const auto rep = check_weight_optimality(c, 4.0, 2000, 7);
        const double obj = corrupt("weight_optimality", rep.objective_star);
        const bool ok = rep.passed && std::abs(obj - 4.0) < 1e-10 && std::abs(rep.closed_form - 4.0) < 1e-10;
        out.push_back({"weight_optimality", ok, "objective at w* = " + sci(obj)});
    }
    {
        Rng rng(11);
        Eigen::MatrixXd x(400, 2);
        std::vector<int> yv(400);
        for (Index i = 0; i < 400; ++i) {
            x(i, 0) = norm_quantile(uniform_open(rng));
            x(i, 1) = uniform_open(rng) < 0.5 ? 1.0 : 0.0;
            yv[static_cast<std::size_t>(i)] = uniform_open(rng) < expit(0.3 + 0.8 * x(i, 0) - 0.5 * x(i, 1)) ? 1 : 0;
        }
        const LogisticFit lf = fit_logistic(x, yv);
        Eigen::Vector3d score = Eigen::Vector3d::Zero();
        for (Index i = 0; i < 400; ++i) {
            const double r = yv[static_cast<std::size_t>(i)] - expit(corrupt("logistic_score", lf.intercept) + x.row(i).dot(lf.coef.transpose()));
            score += r * Eigen::Vector3d(1.0, x(i, 0), x(i, 1));
        }
        const double s = score.cwiseAbs().maxCoeff();
        out.push_back({"logistic_score", lf.converged && s < 1e-8, "score sup-norm = " + sci(s)});
    }
    return out;
}

}  // namespace curematch
