#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include <unistd.h>

#include "curematch/survival.hpp"
#include "oracles.hpp"

using namespace curematch;

TEST(KaplanMeier, HandExample) {
    // Events at 2 and 5, censoring at 3 and 7, horizon 10:
    // S = 1 on [0,2), 3/4 on [2,5), 3/8 on [5,10].
    const std::vector<SurvObs> obs{{2, 1}, {3, 0}, {5, 1}, {7, 0}};
    const KmCurve km = km_fit(obs, 10.0);
    EXPECT_DOUBLE_EQ(km_surv_at_h(km), 0.375);
    EXPECT_DOUBLE_EQ(km_integral(km), 2.0 + 0.75 * 3.0 + 0.375 * 5.0);
    const auto cmet = cmet_from_functionals(0.375, 6.125, 10.0);
    ASSERT_TRUE(cmet.has_value());
    EXPECT_NEAR(*cmet, 3.8, 1e-12);
    EXPECT_EQ(km.at(1.99), 1.0);
    EXPECT_EQ(km.at(2.0), 0.75);
}

TEST(KaplanMeier, MatchesDefinitionOnRandomSamples) {
    std::mt19937_64 gen(4);
    std::uniform_int_distribution<int> ut(1, 30);  // integer times force ties
    std::bernoulli_distribution coin(0.6);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 5 + trial % 40;
        std::vector<double> y;
        std::vector<int> d;
        std::vector<SurvObs> obs;
        for (int i = 0; i < n; ++i) {
            // Follow-up past the horizon is administratively censored at it.
            y.push_back(std::min(static_cast<double>(ut(gen)), 25.0));
            d.push_back(coin(gen) ? 1 : 0);
            if (y.back() == 25.0) d.back() = 0;
            obs.push_back({y.back(), d.back()});
        }
        const KmCurve km = km_fit(obs, 25.0);
        const auto ref = oracle::km(y, d, 25.0);
        EXPECT_NEAR(km_surv_at_h(km), ref.surv_h, 1e-13);
        EXPECT_NEAR(km_integral(km), ref.area, 1e-11);
    }
}

TEST(KaplanMeier, NoEventsGivesFlatCurveAndNoTimeEstimate) {
    const std::vector<SurvObs> obs{{2, 0}, {3, 0}, {10, 0}};
    const KmCurve km = km_fit(obs, 10.0);
    EXPECT_EQ(km_surv_at_h(km), 1.0);
    EXPECT_EQ(km_integral(km), 10.0);
    EXPECT_FALSE(cmet_from_functionals(1.0, 10.0, 10.0).has_value());
}

TEST(KaplanMeier, AllEventsBeforeHorizon) {
    const std::vector<SurvObs> obs{{1, 1}, {2, 1}, {4, 1}};
    const KmCurve km = km_fit(obs, 10.0);
    EXPECT_EQ(km_surv_at_h(km), 0.0);
    const auto cmet = cmet_from_functionals(km_surv_at_h(km), km_integral(km), 10.0);
    ASSERT_TRUE(cmet);
    EXPECT_NEAR(*cmet, (1.0 + 2.0 + 4.0) / 3.0, 1e-14);
}

TEST(Estimate, UsesCureGroupsForCureAndTimeGroupsForTime) {
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(8, 1);
    Eigen::VectorXd y(8);
    y << 1, 2, 3, 4, 10, 10, 5, 6;
    const Cohort c(Covariates(x), y, {1, 1, 1, 1, 0, 0, 1, 0}, {1, 0, 1, 0, 1, 0, 1, 0}, 10.0);
    MatchedGroup cure{0, {4, 6}, {5, 7}, WeightKind::cure, 0, 0};
    MatchedGroup time{0, {0, 2}, {1, 3}, WeightKind::time, 0, 0};
    const HteRecord r = estimate_hte(cure, time, c);
    // Cure groups: treated {10 cens, 5 event} -> S(H) = 1/2; control {10 cens, 6 cens} -> 1.
    EXPECT_DOUBLE_EQ(r.hte_cure, 0.5 - 1.0);
    // Time groups: treated events at 1, 3 -> mean 2; control at 2, 4 -> mean 3.
    ASSERT_TRUE(r.time_valid);
    EXPECT_NEAR(*r.hte_time, -1.0, 1e-12);
    time.query_idx = 1;
    EXPECT_THROW(estimate_hte(cure, time, c), DataError);
}

TEST(Export, RoundTripPreservesValues) {
    std::vector<HteRecord> recs;
    std::mt19937_64 gen(6);
    std::normal_distribution<double> nd;
    for (Index i = 0; i < 50; ++i) {
        HteRecord r;
        r.subject_idx = 49 - i;
        r.hte_cure = nd(gen) / 7.0;
        r.time_valid = i % 5 != 0;
        if (r.time_valid) r.hte_time = nd(gen) * 100.0;
        r.truth_cure = nd(gen);
        r.truth_time = nd(gen);
        recs.push_back(r);
    }
    const auto path = std::filesystem::temp_directory_path() / ("curematch_hte_" + std::to_string(::getpid()) + ".csv");
    export_hte(recs, path.string());
    const auto back = read_hte(path.string());
    ASSERT_EQ(back.size(), recs.size());
    for (const auto& r : recs) {
        const auto& b = back[static_cast<std::size_t>(r.subject_idx)];
        EXPECT_EQ(b.subject_idx, r.subject_idx);
        EXPECT_NEAR(b.hte_cure, r.hte_cure, 1e-12);
        EXPECT_EQ(b.time_valid, r.time_valid);
        if (r.time_valid) {
            EXPECT_NEAR(*b.hte_time, *r.hte_time, 1e-12);
        }
        EXPECT_NEAR(*b.truth_cure, *r.truth_cure, 1e-12);
    }
    std::filesystem::remove(path);
}
