#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <random>

#include "curematch/distributions.hpp"

using namespace curematch;

namespace {

double quad_trunc_mean(double eta, double sigma, double h) {
    // Integrate over s = log t, where the integrand is smooth.
    auto dens = [&](double s) { return std::exp(-0.5 * ((s - eta) / sigma) * ((s - eta) / sigma)); };
    auto num = [&](double s) { return std::exp(s) * dens(s); };
    const double lo = eta - 40.0 * sigma;
    const double hi = std::log(h);
    using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
    return GK::integrate(num, lo, hi, 30, 1e-15) / GK::integrate(dens, lo, hi, 30, 1e-15);
}

}  // namespace

TEST(Distributions, TruncMeanMatchesQuadrature) {
    std::mt19937_64 gen(42);
    std::uniform_real_distribution<double> ue(0.0, 8.0), us(0.2, 2.0), uh(20.0, 2000.0);
    double worst = 0.0;
    int used = 0;
    while (used < 1000) {
        const double eta = ue(gen), sigma = us(gen), h = uh(gen);
        const TruncLogNormal d{eta, sigma, h};
        if (d.mass_below_h() < 1e-6) continue;
        ++used;
        const double q = quad_trunc_mean(eta, sigma, h);
        worst = std::max(worst, std::abs(trunc_mean(d) - q) / q);
    }
    EXPECT_LT(worst, 1e-8);
}

TEST(Distributions, TruncMeanStaysBelowHorizonInTheTail) {
    const TruncLogNormal d{20.0, 0.5, 100.0};
    const double m = trunc_mean(d);
    EXPECT_TRUE(std::isfinite(m));
    EXPECT_LT(m, 100.0);
    EXPECT_GT(m, 95.0);
}

TEST(Distributions, PdfIsDerivativeOfCdf) {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> ut(0.5, 500.0), ue(1.0, 6.0), us(0.3, 1.5);
    for (int i = 0; i < 200; ++i) {
        const double t = ut(gen), eta = ue(gen), s = us(gen);
        const double h = 1e-5 * t;  // cancellation in the cdf difference is about 1e-16 / h
        const double fd = (lognormal_cdf(t + h, eta, s) - lognormal_cdf(t - h, eta, s)) / (2.0 * h);
        const double pdf = lognormal_pdf(t, eta, s);
        EXPECT_NEAR(fd, pdf, 1e-6 * pdf + 1e-15 / h) << "t=" << t;
    }
}

TEST(Distributions, NormalCdfSymmetryAndTail) {
    for (double u = -12.0; u <= 12.0; u += 0.05) {
        EXPECT_NEAR(norm_cdf(u) + norm_cdf(-u), 1.0, 1e-15);
    }
    for (double u : {-5.0, -20.0, -38.0, -60.0}) {
        const long double ref = std::log(0.5L * std::erfc(-static_cast<long double>(u) / std::sqrt(2.0L)));
        EXPECT_NEAR(log_norm_cdf(u), static_cast<double>(ref), 1e-12 * std::abs(static_cast<double>(ref)));
    }
}

TEST(Distributions, QuantileInvertsCdf) {
    for (double p : {1e-12, 1e-6, 0.01, 0.3, 0.5, 0.77, 0.999}) {
        EXPECT_NEAR(norm_cdf(norm_quantile(p)), p, 1e-13 * std::max(p, 1e-3));
    }
    EXPECT_THROW(norm_quantile(0.0), DataError);
    EXPECT_THROW(norm_quantile(1.0), DataError);
}

TEST(Distributions, ExpitIsStableAtExtremes) {
    EXPECT_EQ(expit(-800.0), 0.0);
    EXPECT_EQ(expit(800.0), 1.0);
    EXPECT_NEAR(expit(0.7), 1.0 / (1.0 + std::exp(-0.7)), 1e-16);
    EXPECT_NEAR(log_expit(-800.0), -800.0, 1e-12);
    EXPECT_NEAR(softplus(1e-3), std::log1p(std::exp(1e-3)), 1e-16);
}

TEST(Distributions, TruncatedQuantileStaysInRange) {
    const TruncLogNormal d{6.0, 1.0, 800.0};
    for (double u : {1e-9, 0.25, 0.5, 0.999999}) {
        const double t = trunc_lognormal_quantile(d, u);
        EXPECT_GT(t, 0.0);
        EXPECT_LT(t, 800.0);
        EXPECT_NEAR(lognormal_cdf(t, 6.0, 1.0) / d.mass_below_h(), u, 1e-12);
    }
}

TEST(Distributions, RejectsBadArguments) {
    EXPECT_THROW(lognormal_pdf(0.0, 1.0, 1.0), DataError);
    EXPECT_THROW(lognormal_cdf(1.0, 1.0, 0.0), DataError);
    EXPECT_THROW((TruncLogNormal{1.0, -1.0, 10.0}), DataError);
}

TEST(Distributions, TruncMeanFarBeyondHorizonApproachesIt) {
    // Almost all mass lies above H; what remains piles up just below it.
    const double m = trunc_mean({500.0, 0.1, 10.0});
    EXPECT_LT(m, 10.0);
    EXPECT_GT(m, 9.99);
}
