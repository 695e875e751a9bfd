#pragma once

// Scalar kernels for the logistic cure component and the log-normal
// event-time component, including the horizon-truncated mean.

#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <limits>
#include <numbers>

#include "curematch/error.hpp"

namespace curematch {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178032973640562;

/// Logistic function, evaluated on the branch that cannot overflow.
inline double expit(double u) noexcept {
    if (u >= 0.0) {
        return 1.0 / (1.0 + std::exp(-u));
    }
    const double e = std::exp(u);
    return e / (1.0 + e);
}

/// log(1 + e^u) without overflow.
inline double softplus(double u) noexcept {
    if (u > 0.0) {
        return u + std::log1p(std::exp(-u));
    }
    return std::log1p(std::exp(u));
}

/// log expit(u) = -softplus(-u).
inline double log_expit(double u) noexcept { return -softplus(-u); }

inline double norm_pdf(double u) noexcept {
    return std::exp(-0.5 * u * u - kLogSqrt2Pi);
}

inline double log_norm_pdf(double u) noexcept { return -0.5 * u * u - kLogSqrt2Pi; }

/// Standard normal CDF via erfc; relative accuracy holds in both tails.
inline double norm_cdf(double u) noexcept {
    return 0.5 * std::erfc(-u / std::numbers::sqrt2);
}

namespace detail {

// Mills ratio R(x) = (1 - Phi(x)) / phi(x) for x > 0, Lentz continued fraction.
inline double mills_ratio(double x) noexcept {
    constexpr double tiny = 1e-300;
    double f = x;
    double c = x;
    double d = 0.0;
    for (int k = 1; k < 500; ++k) {
        d = x + k * d;
        if (d == 0.0) d = tiny;
        c = x + k / c;
        if (c == 0.0) c = tiny;
        d = 1.0 / d;
        const double delta = c * d;
        f *= delta;
        if (std::abs(delta - 1.0) < 1e-16) break;
    }
    return 1.0 / f;
}

}  // namespace detail

/// log Phi(u). Switches to the Mills-ratio expansion below u = -8 so the
/// lower tail never rounds to log(0).
inline double log_norm_cdf(double u) noexcept {
    if (u > -8.0) {
        if (u > 5.0) return std::log1p(-norm_cdf(-u));
        return std::log(norm_cdf(u));
    }
    return log_norm_pdf(u) + std::log(detail::mills_ratio(-u));
}

/// Inverse Mills ratio phi(u) / Phi(u), finite for every real u.
inline double inv_mills(double u) noexcept {
    if (u > -8.0) return norm_pdf(u) / norm_cdf(u);
    return 1.0 / detail::mills_ratio(-u);
}

/// Standard normal quantile.
inline double norm_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw DataError("norm_quantile: probability must lie in (0,1)");
    }
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

inline double lognormal_pdf(double t, double eta, double sigma) {
    if (!(t > 0.0)) throw DataError("lognormal_pdf: t must be positive");
    if (!(sigma > 0.0)) throw DataError("lognormal_pdf: sigma must be positive");
    const double z = (std::log(t) - eta) / sigma;
    return std::exp(log_norm_pdf(z) - std::log(sigma) - std::log(t));
}

inline double lognormal_cdf(double t, double eta, double sigma) {
    if (!(t > 0.0)) throw DataError("lognormal_cdf: t must be positive");
    if (!(sigma > 0.0)) throw DataError("lognormal_cdf: sigma must be positive");
    return norm_cdf((std::log(t) - eta) / sigma);
}

/// Log-normal event time restricted to (0, H).
struct TruncLogNormal {
    double eta;
    double sigma;
    double horizon_h;

    TruncLogNormal(double eta_, double sigma_, double horizon)
        : eta(eta_), sigma(sigma_), horizon_h(horizon) {
        if (!(sigma > 0.0)) throw DataError("TruncLogNormal: sigma must be positive");
        if (!(horizon_h > 0.0)) throw DataError("TruncLogNormal: horizon must be positive");
    }

    /// P(T < H) under the untruncated law.
    [[nodiscard]] double mass_below_h() const noexcept {
        return norm_cdf((std::log(horizon_h) - eta) / sigma);
    }
};

/// E[T | T < H] = exp(eta + sigma^2/2) * Phi(zH - sigma) / Phi(zH), zH = (log H - eta)/sigma.
/// The Phi ratio is formed in log space so a horizon deep in the lower tail
/// stays finite.
inline double trunc_mean(const TruncLogNormal& d) {
    const double zh = (std::log(d.horizon_h) - d.eta) / d.sigma;
    const double log_den = log_norm_cdf(zh);
    if (!std::isfinite(log_den)) {
        throw NumericalError("trunc_mean: no event mass below the horizon");
    }
    const double log_num = log_norm_cdf(zh - d.sigma);
    const double m = std::exp(d.eta + 0.5 * d.sigma * d.sigma + log_num - log_den);
    if (!std::isfinite(m) || !(m > 0.0)) {
        throw NumericalError("trunc_mean: no event mass below the horizon");
    }
    return std::min(m, std::nextafter(d.horizon_h, 0.0));
}

/// Inverse-CDF draw from the truncated law given u in (0,1).
inline double trunc_lognormal_quantile(const TruncLogNormal& d, double u) {
    const double p = u * d.mass_below_h();
    if (!(p > 0.0)) throw NumericalError("trunc_lognormal_quantile: no event mass below the horizon");
    const double t = std::exp(d.eta + d.sigma * norm_quantile(p));
    return std::min(t, std::nextafter(d.horizon_h, 0.0));
}

}  // namespace curematch
