#include <gtest/gtest.h>

#include <algorithm>

#include "support.hpp"

using namespace flexpoint;

TEST(ZoneCounts, SnapshotTransitions) {
    const Dataset ds = parse_events(fpt::kSnapshotCsv);
    const auto y = zone_transition_counts(ds);
    const int s = y.state(2, 18);
    EXPECT_DOUBLE_EQ(y.at(s, 2), 1.0);
    EXPECT_DOUBLE_EQ(y.at(s, 1), 1.0);
    EXPECT_DOUBLE_EQ(y.at(s, 3), 0.0);
    double total = 0.0;
    for (double v : y.values) total += v;
    EXPECT_DOUBLE_EQ(total, 7.0);
}

TEST(ZoneCounts, SingleEventPeriodsCountNothing) {
    Dataset ds = fpt::random_dataset(4, 3, 3, 1, 2);
    const auto y = zone_transition_counts(ds);
    for (double v : y.values) EXPECT_EQ(v, 0.0);
}

TEST(ZoneCounts, KnownPathAndPeriodOrderInvariance) {
    Dataset ds = fpt::random_dataset(3, 3, 4, 15, 5);
    ZoneCounts tally(3, 3);
    for (const auto& p : ds.periods) {
        for (std::size_t i = 0; i + 1 < p.events.size(); ++i) {
            const int s = (p.events[i].zone - 1) * 3 + (p.events[i].mark - 1);
            tally.values[static_cast<std::size_t>(s * 3 + p.events[i + 1].zone - 1)] += 1.0;
        }
    }
    EXPECT_EQ(zone_transition_counts(ds).values, tally.values);
    std::reverse(ds.periods.begin(), ds.periods.end());
    EXPECT_EQ(zone_transition_counts(ds).values, tally.values);
}

TEST(ZonePosterior, AddsConcentration) {
    ZoneCounts y(3, 1);
    EXPECT_EQ(zone_posterior(y, 1.0).values, (std::vector<double>{1, 1, 1, 1, 1, 1, 1, 1, 1}));
    y.at(0, 1) = 3;
    y.at(0, 2) = 1;
    const auto post = zone_posterior(y, 1.0);
    EXPECT_EQ(std::vector<double>(post.row(0).begin(), post.row(0).end()), (std::vector<double>{4, 2, 1}));
    const auto m = zone_posterior_mean(post);
    EXPECT_NEAR(m.at(0, 1), 4.0 / 7.0, 1e-15);
    EXPECT_NEAR(m.at(0, 2), 2.0 / 7.0, 1e-15);
    EXPECT_NEAR(m.at(0, 3), 1.0 / 7.0, 1e-15);
    EXPECT_THROW((void)zone_posterior(y, 0.0), std::invalid_argument);
}

TEST(ZoneDraws, PosteriorDrawMeansMatchClosedForm) {
    ZoneCounts y(3, 1);
    y.at(0, 1) = 3;
    y.at(0, 2) = 1;
    const auto post = zone_posterior(y, 1.0);
    Rng rng(9);
    const int n = 20000;
    std::vector<double> acc(3);
    for (int i = 0; i < n; ++i) {
        const auto eta = sample_zone_params(post, y, rng);
        for (int z = 1; z <= 3; ++z) acc[static_cast<std::size_t>(z - 1)] += eta.at(0, z);
    }
    const std::vector<double> expect{4.0 / 7, 2.0 / 7, 1.0 / 7};
    for (std::size_t k = 0; k < 3; ++k) {
        // Dirichlet marginal sd: sqrt(p(1-p)/(A+1)) with A = 7.
        const double sd = std::sqrt(expect[k] * (1 - expect[k]) / 8.0);
        EXPECT_NEAR(acc[k] / n, expect[k], 4 * sd / std::sqrt(n));
    }
}

TEST(ZoneLogProb, RowLookupAndSimplexCheck) {
    ZoneParams eta(3, 1);
    eta.at(0, 1) = 0.25;
    eta.at(0, 2) = 0.5;
    eta.at(0, 3) = 0.25;
    EXPECT_NEAR(zone_log_prob(0, 2, eta), std::log(0.5), 1e-15);
    eta.at(0, 3) = 0.3;
    EXPECT_THROW((void)zone_log_prob(0, 2, eta), std::domain_error);
}

TEST(SampleZone, DegenerateAndMultinomialFrequencies) {
    ZoneParams eta(3, 2);
    eta.at(0, 1) = 1.0;
    eta.at(1, 1) = 0.2;
    eta.at(1, 2) = 0.3;
    eta.at(1, 3) = 0.5;
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) ASSERT_EQ(sample_zone(0, eta, rng), 1);
    const int n = 100000;
    std::vector<int> counts(3);
    for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(sample_zone(1, eta, rng) - 1)];
    const double p[] = {0.2, 0.3, 0.5};
    for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_NEAR(counts[k] / static_cast<double>(n), p[k], 3 * std::sqrt(p[k] * (1 - p[k]) / n));
    }
}

TEST(ZoneLogLikelihood, SumsTransitionLogs) {
    const Dataset ds = parse_events(fpt::kSnapshotCsv);
    ZoneParams eta(3, 30, 1.0 / 3.0);
    EXPECT_NEAR(zone_log_likelihood(ds, eta), 7 * std::log(1.0 / 3.0), 1e-12);
}
