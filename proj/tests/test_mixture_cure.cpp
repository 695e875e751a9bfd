#include <gtest/gtest.h>

#include <cmath>

#include "curematch/distributions.hpp"
#include "curematch/mixture_cure.hpp"
#include "curematch/rng.hpp"
#include "oracles.hpp"

using namespace curematch;

namespace {

/// Draws from the model itself with admin censoring at h and uniform
/// censoring on (0, 1.5 h).
McmData draw(const McmParams& truth, Index n, double h, std::uint64_t seed, bool binary_first = true) {
    Rng rng(seed);
    const Index p = truth.num_covariates();
    Eigen::MatrixXd x(n, p);
    Eigen::VectorXd y(n);
    std::vector<int> d(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < p; ++j) {
            x(i, j) = (binary_first && j == 0) ? (uniform_open(rng) < 0.5 ? 1.0 : 0.0)
                                               : norm_quantile(uniform_open(rng));
        }
        const bool uncured = uniform_open(rng) < expit(truth.beta0 + x.row(i).dot(truth.beta));
        const double c = 1.5 * h * uniform_open(rng);
        double t = h;
        if (uncured) {
            t = trunc_lognormal_quantile({truth.lambda0 + x.row(i).dot(truth.lambda), truth.sigma(), h},
                                         uniform_open(rng));
        }
        if (uncured && t < c) {
            y[i] = t;
            d[static_cast<std::size_t>(i)] = 1;
        } else {
            y[i] = std::min(c, h);
            d[static_cast<std::size_t>(i)] = 0;
        }
    }
    return {std::move(x), std::move(y), std::move(d), h};
}

McmParams params(double b0, std::vector<double> b, double l0, std::vector<double> l, double log_s) {
    return {b0, Eigen::Map<Eigen::VectorXd>(b.data(), static_cast<Index>(b.size())), l0,
            Eigen::Map<Eigen::VectorXd>(l.data(), static_cast<Index>(l.size())), log_s};
}

}  // namespace

TEST(MixtureCure, LikelihoodMatchesIndependentFormula) {
    const McmData data = draw(params(0.4, {0.8}, 2.0, {0.5}, -0.3), 80, 30.0, 5, false);
    std::vector<double> x, y;
    for (Index i = 0; i < data.rows(); ++i) {
        x.push_back(data.x()(i, 0));
        y.push_back(data.y()[i]);
    }
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
        const double b0 = 2 * uniform_open(rng) - 1, b1 = 2 * uniform_open(rng) - 1;
        const double l0 = 1 + 2 * uniform_open(rng), l1 = uniform_open(rng) - 0.5, ls = uniform_open(rng) - 0.5;
        const double ref = oracle::mcm_loglik(b0, b1, l0, l1, ls, x, y, data.delta(), 30.0);
        const double got = obs_loglik(params(b0, {b1}, l0, {l1}, ls), data);
        EXPECT_NEAR(got, ref, 1e-10 * std::abs(ref));
    }
}

TEST(MixtureCure, GradientMatchesFiniteDifferences) {
    const McmData data = draw(params(0.5, {0.4, -0.3, 0.2}, 4.0, {0.3, 0.2, -0.4}, 0.0), 400, 200.0, 11);
    Rng rng(19);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        Eigen::VectorXd th(9);
        for (Index j = 0; j < 9; ++j) th[j] = norm_quantile(uniform_open(rng)) * 0.6;
        th[4] += 4.0;
        Eigen::VectorXd g;
        data.loglik(th, &g);
        for (Index j = 0; j < 9; ++j) {
            const double h = 1e-6 * std::max(1.0, std::abs(th[j]));
            Eigen::VectorXd up = th, dn = th;
            up[j] += h;
            dn[j] -= h;
            const double fd = (data.loglik(up) - data.loglik(dn)) / (2.0 * h);
            worst = std::max(worst, std::abs(fd - g[j]) / std::max(1.0, std::abs(fd)));
        }
    }
    EXPECT_LT(worst, 1e-5);
}

TEST(MixtureCure, ToyFitMatchesGridSearch) {
    const McmData data = draw(params(0.8, {1.0}, 1.5, {0.6}, std::log(0.5)), 30, std::exp(3.0), 23, false);
    std::vector<double> x, y;
    for (Index i = 0; i < data.rows(); ++i) {
        x.push_back(data.x()(i, 0));
        y.push_back(data.y()[i]);
    }
    const double h = data.horizon();
    auto f = [&](const std::vector<double>& v) {
        const double ll = oracle::mcm_loglik(v[0], v[1], v[2], v[3], v[4], x, y, data.delta(), h);
        return std::isfinite(ll) ? ll : -1e300;
    };
    // Coarse grid over the whole box, then a finer grid around its winner.
    auto coarse = oracle::grid_argmax(f, {-3, -3, -3, -3, -1}, {3, 3, 3, 3, 1}, {24, 24, 24, 24, 8});
    std::vector<double> lo(5), hi(5);
    for (int j = 0; j < 5; ++j) {
        lo[j] = coarse.first[j] - 0.25;
        hi[j] = coarse.first[j] + 0.25;
    }
    const double step = 0.5 / 12;
    auto fine = oracle::grid_argmax(f, lo, hi, {12, 12, 12, 12, 12});

    const MixtureCureFit fit = fit_mcm(data, 0);
    const Eigen::VectorXd th = fit.params.pack();
    EXPECT_GE(fit.loglik, fine.second - 1e-9);
    for (int j = 0; j < 5; ++j) EXPECT_NEAR(th[j], fine.first[static_cast<std::size_t>(j)], step) << "coordinate " << j;
}

TEST(MixtureCure, RecoversTruthOnLargeSample) {
    const McmParams truth = params(0.5, {0.6, -0.4}, 4.0, {0.3, 0.5}, std::log(0.8));
    const McmData data = draw(truth, 20000, 300.0, 29);
    const MixtureCureFit fit = fit_mcm(data, 1);
    EXPECT_TRUE(fit.converged);
    EXPECT_LT((fit.params.pack() - truth.pack()).cwiseAbs().maxCoeff(), 0.1);
}

TEST(MixtureCure, FitAscendsFromStartingPoints) {
    const McmParams truth = params(0.2, {0.5, 0.3}, 3.0, {-0.2, 0.4}, 0.0);
    const McmData data = draw(truth, 800, 100.0, 31);
    const MixtureCureFit fit = fit_mcm(data, 0);
    EXPECT_GE(fit.loglik, data.loglik(McmParams::zeros(2).pack()));
    EXPECT_GE(fit.loglik, data.loglik(truth.pack()));
    EXPECT_NEAR(fit.loglik, obs_loglik(fit.params, data), 1e-9 * std::abs(fit.loglik));
    EXPECT_LT(fit.grad_norm, FitConfig{}.tol);
}

TEST(MixtureCure, DeterministicForFixedSeed) {
    const McmData data = draw(params(0.2, {0.5}, 3.0, {0.4}, 0.0), 300, 100.0, 37);
    FitConfig cfg;
    cfg.seed = 99;
    const MixtureCureFit a = fit_mcm(data, 0, cfg);
    const MixtureCureFit b = fit_mcm(data, 0, cfg);
    EXPECT_EQ(a.params.pack(), b.params.pack());
    EXPECT_EQ(a.loglik, b.loglik);
}

TEST(MixtureCure, AllCensoredAtHorizonDrivesCureProbabilityToOne) {
    Eigen::MatrixXd x(50, 1);
    for (Index i = 0; i < 50; ++i) x(i, 0) = static_cast<double>(i % 2);
    const McmData data(x, Eigen::VectorXd::Constant(50, 10.0), std::vector<int>(50, 0), 10.0);
    const MixtureCureFit fit = fit_mcm(data, 0);
    EXPECT_TRUE(fit.converged);
    EXPECT_FALSE(fit.aft_identified);
    EXPECT_LT(expit(fit.params.beta0), 1e-3);
    EXPECT_LT(expit(fit.params.beta0 + fit.params.beta[0]), 1e-3);
    EXPECT_FALSE(fit.warnings.empty());
}

TEST(MixtureCure, WarnsOnSmallSlices) {
    const McmData data = draw(params(0.2, {0.5}, 3.0, {0.4}, 0.0), 25, 100.0, 41);
    const MixtureCureFit fit = fit_mcm(data, 0);
    EXPECT_FALSE(fit.warnings.empty());
}

TEST(MixtureCure, ParamsPackRoundTrip) {
    const McmParams p = params(0.1, {1, 2, 3}, 4.0, {5, 6, 7}, 0.25);
    const McmParams q = McmParams::unpack(p.pack());
    EXPECT_EQ(q.pack(), p.pack());
    const nlohmann::json j = p;
    EXPECT_EQ(j.get<McmParams>().pack(), p.pack());
    EXPECT_THROW(McmParams::unpack(Eigen::VectorXd::Zero(4)), DataError);
}
