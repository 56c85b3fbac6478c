#include <gtest/gtest.h>

#include <boost/math/quadrature/exp_sinh.hpp>

#include "support.hpp"

using namespace flexpoint;

TEST(TimeLogDensity, ClosedFormCases) {
    EXPECT_NEAR(time_log_density(0.5, 1, TimeParams::uniform(1, 1.0, 2.0)), std::log(2.0) - 1.0, 1e-12);
    EXPECT_NEAR(time_log_density(1.0, 1, TimeParams::uniform(1, 2.0, 1.0)), -1.0, 1e-12);
    const auto p = TimeParams::uniform(3, 1.0, 0.7);
    for (double dt : {0.01, 1.0, 12.5, 300.0}) EXPECT_NEAR(time_log_density(dt, 2, p), std::log(0.7) - 0.7 * dt, 1e-12);
}

TEST(TimeLogDensity, UsesPreviousMarkParameters) {
    TimeParams p{{1.0, 3.0}, {1.0, 0.5}};
    EXPECT_NEAR(time_log_density(2.0, 2, p), 3 * std::log(0.5) - std::lgamma(3.0) + 2 * std::log(2.0) - 1.0, 1e-12);
}

TEST(TimeLogDensity, RejectsNonPositiveGap) {
    const auto p = TimeParams::uniform(1, 1.0, 1.0);
    EXPECT_THROW((void)time_log_density(0.0, 1, p), std::domain_error);
    EXPECT_THROW((void)time_log_density(-1.0, 1, p), std::domain_error);
}

TEST(TimeLogDensity, IntegratesToOne) {
    boost::math::quadrature::exp_sinh<double> integrator;
    for (double a : {0.5, 1.0, 2.5, 7.0}) {
        for (double b : {0.05, 1.0, 4.0}) {
            const double I = integrator.integrate([&](double t) { return std::exp(gamma_log_density(t, a, b)); });
            EXPECT_NEAR(I, 1.0, 1e-6) << "a=" << a << " b=" << b;
        }
    }
}

TEST(TimeLogDensity, GradientMatchesCentralDifferences) {
    const double h = 1e-6;
    for (double a : {0.6, 2.0, 9.0}) {
        for (double b : {0.1, 1.3}) {
            for (double dt : {0.2, 3.0}) {
                const auto g = gamma_log_density_gradient(dt, a, b);
                const double fa = (gamma_log_density(dt, a + h, b) - gamma_log_density(dt, a - h, b)) / (2 * h);
                const double fb = (gamma_log_density(dt, a, b + h) - gamma_log_density(dt, a, b - h)) / (2 * h);
                EXPECT_NEAR(g.d_shape, fa, 1e-4 * std::max(1.0, std::abs(fa)));
                EXPECT_NEAR(g.d_rate, fb, 1e-4 * std::max(1.0, std::abs(fb)));
            }
        }
    }
}

TEST(TimeLogPrior, ExponentialPriors) {
    EXPECT_NEAR(time_log_prior(TimeParams::uniform(1, 1.0, 1.0), {1.0, 1.0}), -2.0, 1e-12);
    const TimePrior def;
    EXPECT_DOUBLE_EQ(def.shape_rate, 0.01);
    EXPECT_DOUBLE_EQ(def.rate_rate, 0.01);
    const double one = time_log_prior(TimeParams::uniform(1, 0.8, 0.3), def);
    EXPECT_TRUE(std::isfinite(one));
    EXPECT_NEAR(time_log_prior(TimeParams::uniform(2, 0.8, 0.3), def), 2 * one, 1e-12);
}

TEST(SampleInterarrival, MomentsAndDeterminism) {
    const int n = 100000;
    auto run = [&](double a, double b, std::uint64_t seed) {
        Rng rng(seed);
        const auto p = TimeParams::uniform(1, a, b);
        std::vector<double> x(n);
        for (auto& v : x) v = sample_interarrival(1, p, rng);
        return x;
    };
    const auto e = run(1.0, 1.0, 3);
    EXPECT_NEAR(mean(e), 1.0, 3.0 / std::sqrt(n));
    for (double v : e) ASSERT_GT(v, 0.0);

    const auto g = run(4.0, 2.0, 4);
    // sd of the sample mean is 1/sqrt(n); the sample variance has sd about sqrt(m4 - s^4)/sqrt(n) = sqrt(2.5)/sqrt(n).
    EXPECT_NEAR(mean(g), 2.0, 4.0 / std::sqrt(n));
    EXPECT_NEAR(variance(g), 1.0, 4.0 * std::sqrt(2.5 / n));

    EXPECT_EQ(run(2.0, 3.0, 11), run(2.0, 3.0, 11));
}

TEST(InterarrivalStats, MatchesPerEventSum) {
    const Dataset ds = fpt::random_dataset(4, 3, 3, 20, 17);
    const auto stats = InterarrivalStats::collect(ds);
    const TimeParams p{{0.7, 1.2, 2.0, 0.9}, {0.3, 0.6, 1.1, 0.45}};
    double direct = 0.0;
    for (const auto& per : ds.periods) {
        for (std::size_t i = 1; i < per.events.size(); ++i) {
            direct += time_log_density(per.events[i].t - per.events[i - 1].t, per.events[i - 1].mark, p);
        }
    }
    std::vector<double> ga(4), gb(4);
    EXPECT_NEAR(stats.log_likelihood(p, &ga, &gb), direct, 1e-9);
    const double h = 1e-6;
    for (std::size_t m = 0; m < 4; ++m) {
        TimeParams up = p, dn = p;
        up.shape[m] += h;
        dn.shape[m] -= h;
        EXPECT_NEAR(ga[m], (stats.log_likelihood(up) - stats.log_likelihood(dn)) / (2 * h), 1e-4);
        up = p;
        dn = p;
        up.rate[m] += h;
        dn.rate[m] -= h;
        EXPECT_NEAR(gb[m], (stats.log_likelihood(up) - stats.log_likelihood(dn)) / (2 * h), 1e-4);
    }
}
