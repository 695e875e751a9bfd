#include <gtest/gtest.h>

#include <random>

#include "curematch/baselines.hpp"
#include "curematch/logistic.hpp"
#include "oracles.hpp"

using namespace curematch;

namespace {

struct SurvToy {
    std::vector<double> x, y;
    std::vector<int> d;
};

SurvToy cox_toy(int n, std::uint64_t seed, bool integer_times) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SurvToy t;
    for (int i = 0; i < n; ++i) {
        const double x = nd(gen);
        double time = -std::log(u(gen)) / std::exp(0.7 * x);
        if (integer_times) time = std::ceil(3.0 * time);
        t.x.push_back(x);
        t.y.push_back(time);
        t.d.push_back(u(gen) < 0.75 ? 1 : 0);
    }
    return t;
}

Eigen::MatrixXd column(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
}

}  // namespace

TEST(Logistic, ToyFitMatchesGridSearch) {
    std::mt19937_64 gen(3);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> x;
    std::vector<int> y;
    for (int i = 0; i < 30; ++i) {
        x.push_back(nd(gen));
        y.push_back(u(gen) < 1.0 / (1.0 + std::exp(-(0.4 + 1.1 * x.back()))) ? 1 : 0);
    }
    const double step = 6.0 / 1200;
    auto [best, best_v] = oracle::grid_argmax(
        [&](const std::vector<double>& b) { return oracle::logistic_loglik(b[0], b[1], x, y); }, {-3, -3}, {3, 3},
        {1200, 1200});
    const LogisticFit f = fit_logistic(column(x), y);
    EXPECT_NEAR(f.intercept, best[0], step);
    EXPECT_NEAR(f.coef[0], best[1], step);
    EXPECT_GE(oracle::logistic_loglik(f.intercept, f.coef[0], x, y), best_v - 1e-12);
}

TEST(Logistic, SatisfiesScoreEquations) {
    std::mt19937_64 gen(5);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd x(500, 3);
    std::vector<int> y(500);
    for (Index i = 0; i < 500; ++i) {
        for (Index j = 0; j < 3; ++j) x(i, j) = nd(gen);
        y[static_cast<std::size_t>(i)] = u(gen) < expit(-0.2 + x(i, 0) - 0.5 * x(i, 2)) ? 1 : 0;
    }
    const LogisticFit f = fit_logistic(x, y);
    Eigen::Vector4d s = Eigen::Vector4d::Zero();
    for (Index i = 0; i < 500; ++i) {
        const double r = y[static_cast<std::size_t>(i)] - f.predict(x.row(i));
        s += r * Eigen::Vector4d(1.0, x(i, 0), x(i, 1), x(i, 2));
    }
    EXPECT_LT(s.cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_THROW(fit_logistic(x, std::vector<int>(500, 1)), DataError);
}

TEST(Cox, ToyFitMatchesGridSearch) {
    for (bool ties : {false, true}) {
        const SurvToy t = cox_toy(25, ties ? 8 : 7, ties);
        const double step = 6.0 / 60000;
        auto [best, best_v] = oracle::grid_argmax(
            [&](const std::vector<double>& b) { return oracle::cox_loglik(b[0], t.x, t.y, t.d); }, {-3}, {3},
            {60000});
        const CoxFit f = fit_cox(column(t.x), Eigen::Map<const Eigen::VectorXd>(t.y.data(), 25), t.d);
        EXPECT_NEAR(f.coef[0], best[0], step) << "ties=" << ties;
        EXPECT_GE(oracle::cox_loglik(f.coef[0], t.x, t.y, t.d), best_v - 1e-12);
    }
}

TEST(Cox, ScoreVanishesAndMatchesFiniteDifferences) {
    std::mt19937_64 gen(11);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Index n = 300;
    Eigen::MatrixXd x(n, 3);
    Eigen::VectorXd y(n);
    std::vector<int> d(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < 3; ++j) x(i, j) = nd(gen);
        y[i] = std::ceil(10.0 * -std::log(u(gen)) / std::exp(0.5 * x(i, 0) - 0.3 * x(i, 1)));
        d[static_cast<std::size_t>(i)] = u(gen) < 0.8 ? 1 : 0;
    }
    const CoxFit f = fit_cox(x, y, d);
    EXPECT_LT(f.grad_norm, 1e-8);

    const Eigen::MatrixXd xc = x.rowwise() - f.center.transpose();
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return y[a] > y[b]; });
    const Eigen::Vector3d b(0.3, -0.2, 0.1);
    const auto pass = detail::cox_pass(xc, y, d, order, b, false);
    for (Index j = 0; j < 3; ++j) {
        Eigen::Vector3d up = b, dn = b;
        up[j] += 1e-6;
        dn[j] -= 1e-6;
        const double fd = (detail::cox_pass(xc, y, d, order, up, false).loglik -
                           detail::cox_pass(xc, y, d, order, dn, false).loglik) / 2e-6;
        EXPECT_NEAR(pass.grad[j], fd, 1e-5 * std::max(1.0, std::abs(fd)));
    }
}

TEST(Cox, BaselineIsNelsonAalenWithoutCovariateEffect) {
    const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(5, 1);
    Eigen::VectorXd y(5);
    y << 1, 2, 2, 4, 5;
    const CoxFit f = fit_cox(x, y, {1, 1, 0, 1, 0});
    // Risk sets 5, 4, 2 at the event times 1, 2, 4.
    ASSERT_EQ(f.event_times, (std::vector<double>{1, 2, 4}));
    EXPECT_NEAR(f.cum_hazard[0], 1.0 / 5, 1e-15);
    EXPECT_NEAR(f.cum_hazard[1], 1.0 / 5 + 1.0 / 4, 1e-15);
    EXPECT_NEAR(f.cum_hazard[2], 1.0 / 5 + 1.0 / 4 + 1.0 / 2, 1e-15);
    EXPECT_EQ(f.baseline_at(0.5), 0.0);
    EXPECT_NEAR(f.baseline_at(3.0), 0.45, 1e-15);
}

TEST(Cox, NoMatchEffectIsZeroForIdenticalArms) {
    std::mt19937_64 gen(17);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Index half = 150;
    Eigen::MatrixXd x(2 * half, 2);
    Eigen::VectorXd y(2 * half);
    std::vector<int> d(2 * half), z(2 * half);
    for (Index i = 0; i < half; ++i) {
        x(i, 0) = nd(gen);
        x(i, 1) = u(gen) < 0.5 ? 1.0 : 0.0;
        y[i] = std::min(50.0, 10.0 * -std::log(u(gen)) / std::exp(0.4 * x(i, 0)));
        d[static_cast<std::size_t>(i)] = y[i] < 50.0 && u(gen) < 0.8 ? 1 : 0;
        z[static_cast<std::size_t>(i)] = 1;
        x.row(half + i) = x.row(i);
        y[half + i] = y[i];
        d[static_cast<std::size_t>(half + i)] = d[static_cast<std::size_t>(i)];
        z[static_cast<std::size_t>(half + i)] = 0;
    }
    const Cohort c(Covariates(x), y, d, z, 50.0);
    Split s;
    for (Index i = 0; i < 2 * half; ++i) {
        s.train_idx.push_back(i);
        s.est_idx.push_back(i);
    }
    for (const auto& r : cox_nomatch_hte(c, s)) {
        EXPECT_EQ(r.hte_cure, 0.0);
        if (r.time_valid) {
            EXPECT_EQ(*r.hte_time, 0.0);
        }
    }
}

TEST(Baselines, SummaryMatchesCurveIntegral) {
    const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(5, 1);
    Eigen::VectorXd y(5);
    y << 1, 2, 2, 4, 5;
    const CoxFit f = fit_cox(x, y, {1, 1, 0, 1, 0});
    const ArmSummary s = cox_summary(f, x.row(0), 6.0);
    const double s1 = std::exp(-0.2), s2 = std::exp(-0.45), s4 = std::exp(-0.95);
    EXPECT_NEAR(s.surv_h, s4, 1e-14);
    EXPECT_NEAR(s.area, 1.0 + s1 * 1.0 + s2 * 2.0 + s4 * 2.0, 1e-13);
    ASSERT_TRUE(s.cmet);
    EXPECT_NEAR(*s.cmet, (s.area - 6.0 * s4) / (1.0 - s4), 1e-12);
}

TEST(Baselines, ScoreAndSelectionHelpers) {
    std::mt19937_64 gen(23);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Index n = 600;
    Eigen::MatrixXd x(n, 6);
    Eigen::VectorXd y(n);
    std::vector<int> d(n), z(n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < 6; ++j) x(i, j) = nd(gen);
        z[static_cast<std::size_t>(i)] = u(gen) < expit(0.8 * x(i, 1)) ? 1 : 0;
        y[i] = std::min(30.0, 5.0 * -std::log(u(gen)) / std::exp(0.9 * x(i, 0) - 0.8 * x(i, 2)));
        d[static_cast<std::size_t>(i)] = y[i] < 30.0 ? 1 : 0;
    }
    const Cohort c(Covariates(x), y, d, z, 30.0);
    const Split s = split_cohort(c, 0.5, 1);

    const Eigen::VectorXd ps = propensity_scores(c, s);
    EXPECT_TRUE(((ps.array() > 0.0) && (ps.array() < 1.0)).all());
    const Eigen::VectorXd lg = propensity_scores(c, s, PropensityScale::logit);
    for (Index i = 0; i < n; ++i) EXPECT_NEAR(expit(lg[i]), ps[i], 1e-15);

    const WeightMatrix w = feature_selection_weights(c, s);
    EXPECT_EQ(w.weights().sum(), 3.0);
    EXPECT_EQ(w.weights()[0], 1.0);
    EXPECT_EQ(w.weights()[2], 1.0);

    const auto recs = euclidean_match_hte(c, s, 10);
    const auto groups = knn_match(c, s, WeightMatrix::unit(6), 10);
    ASSERT_EQ(recs.size(), groups.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const HteRecord r = estimate_hte(groups[i], groups[i], c);
        EXPECT_EQ(recs[i].hte_cure, r.hte_cure);
        EXPECT_EQ(recs[i].hte_time, r.hte_time);
    }
}
