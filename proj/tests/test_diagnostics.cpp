#include <gtest/gtest.h>

#include "support.hpp"

using namespace flexpoint;

namespace {

std::vector<double> poisson_times(double rate, double T, Rng& rng) {
    std::vector<double> t;
    std::exponential_distribution<double> ex(rate);
    for (double s = ex(rng); s < T; s += ex(rng)) t.push_back(s);
    return t;
}

std::vector<double> grid(double lo, double hi, int n) {
    std::vector<double> g;
    for (int i = 0; i < n; ++i) g.push_back(lo + (hi - lo) * i / (n - 1));
    return g;
}

// Mean of K(t) - 2t over replicates, per grid point.
template <class Gen>
std::vector<double> mean_excess(Gen gen, double T, const std::vector<double>& g, int reps) {
    std::vector<double> acc(g.size(), 0.0);
    for (int r = 0; r < reps; ++r) {
        const auto t = gen(r);
        const auto k = k_function(t, T, g);
        for (std::size_t i = 0; i < g.size(); ++i) acc[i] += (k[i] - 2 * g[i]) / reps;
    }
    return acc;
}

}  // namespace

TEST(KFunction, HandValueWithEdgeWeights) {
    const std::vector<double> t{1.0, 2.0};
    const std::vector<double> g{1.0};
    // |1-2| = 1 exceeds min(1, 9) for neither event: both weights are 1.
    EXPECT_NEAR(k_function(t, 10.0, g)[0], 10.0 / 4.0 * 2.0, 1e-12);
    EXPECT_NEAR(k_function(t, 10.0, std::vector<double>{0.5})[0], 0.0, 1e-12);
    // Near the edge the weight doubles: min(0.5, 9.5) < 1.
    const std::vector<double> edge{0.5, 1.5};
    EXPECT_NEAR(k_function(edge, 10.0, g)[0], 10.0 / 4.0 * (2.0 + 1.0), 1e-12);
    EXPECT_THROW((void)k_function(std::vector<double>{1.0}, 10.0, g), std::invalid_argument);
}

TEST(KFunction, MonotoneAndBoundedBelowByUnweighted) {
    Rng rng(3);
    const auto t = poisson_times(0.5, 200.0, rng);
    const auto g = grid(0.0, 100.0, 51);
    const auto k = k_function(t, 200.0, g);
    const auto k1 = k_function(t, 200.0, g, false);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (i > 0) {
            EXPECT_GE(k[i], k[i - 1]);
        }
        EXPECT_LE(k1[i], k[i]);
    }
}

TEST(KFunction, PoissonExcessNearZero) {
    const double T = 500.0;
    const auto g = grid(10.0, 100.0, 10);
    const auto ex = mean_excess(
        [&](int r) {
            Rng rng = make_rng(11, {static_cast<std::uint64_t>(r)});
            return poisson_times(0.4189, T, rng);
        },
        T, g, 100);
    // Relative to the scale 2t the average excess is small.
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_LT(std::abs(ex[i]), 0.1 * 2 * g[i]) << g[i];
}

TEST(KFunction, HawkesThreeExcessPositiveAndIncreasing) {
    const double T = 2700.0;
    const Hawkes1DParams p{0.1068, 0.8, 0.01};
    const auto g = grid(10.0, 100.0, 10);
    const auto ex = mean_excess(
        [&](int r) {
            Rng rng = make_rng(5, {static_cast<std::uint64_t>(r)});
            return hawkes1d_simulate(p, T, rng);
        },
        T, g, 100);
    for (std::size_t i = 0; i < g.size(); ++i) {
        EXPECT_GT(ex[i], 0.0);
        if (i > 0) {
            EXPECT_GT(ex[i], ex[i - 1]);
        }
    }
}

TEST(KFunction, UnderdispersedRenewalHasNegativeExcess) {
    const double T = 2000.0;
    const auto g = grid(2.0, 20.0, 10);
    const auto ex = mean_excess(
        [&](int r) {
            Rng rng = make_rng(9, {static_cast<std::uint64_t>(r)});
            std::gamma_distribution<double> gap(4.0, 0.5);
            std::vector<double> t;
            for (double s = gap(rng); s < T; s += gap(rng)) t.push_back(s);
            return t;
        },
        T, g, 50);
    for (double v : ex) EXPECT_LT(v, 0.0);
}

TEST(Hawkes1D, ZeroExcitationIsPoisson) {
    Rng rng(1);
    const auto t = poisson_times(2.0, 30.0, rng);
    const double n = static_cast<double>(t.size());
    for (double beta : {0.1, 3.0}) {
        EXPECT_NEAR(hawkes1d_loglik(t, 30.0, {1.7, 0.0, beta}), n * std::log(1.7) - 1.7 * 30.0, 1e-9);
    }
}

TEST(Hawkes1D, RecursionMatchesDirectSum) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed);
        const double T = 40.0;
        const auto t = poisson_times(1.5, T, rng);
        const Hawkes1DParams p{0.3 + uniform01(rng), 0.9 * uniform01(rng), 0.2 + 3 * uniform01(rng)};
        double direct = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            double lam = p.mu;
            for (std::size_t j = 0; j < i; ++j) lam += p.eps * p.beta * std::exp(-p.beta * (t[i] - t[j]));
            direct += std::log(lam);
        }
        direct -= p.mu * T;
        for (double tj : t) direct -= p.eps * (1.0 - std::exp(-p.beta * (T - tj)));
        EXPECT_NEAR(hawkes1d_loglik(t, T, p), direct, 1e-9);
    }
}

TEST(Hawkes1D, GradientMatchesFiniteDifferences) {
    Rng rng(4);
    const double T = 60.0;
    const auto t = hawkes1d_simulate({0.5, 0.5, 0.7}, T, rng);
    const Hawkes1DParams p{0.4, 0.35, 1.1};
    Hawkes1DGradient g;
    (void)hawkes1d_loglik(t, T, p, &g);
    const double h = 1e-6;
    auto f = [&](double mu, double eps, double beta) { return hawkes1d_loglik(t, T, {mu, eps, beta}); };
    const double fm = (f(p.mu + h, p.eps, p.beta) - f(p.mu - h, p.eps, p.beta)) / (2 * h);
    const double fe = (f(p.mu, p.eps + h, p.beta) - f(p.mu, p.eps - h, p.beta)) / (2 * h);
    const double fb = (f(p.mu, p.eps, p.beta + h) - f(p.mu, p.eps, p.beta - h)) / (2 * h);
    EXPECT_NEAR(g.mu, fm, 1e-4 * std::max(1.0, std::abs(fm)));
    EXPECT_NEAR(g.eps, fe, 1e-4 * std::max(1.0, std::abs(fe)));
    EXPECT_NEAR(g.beta, fb, 1e-4 * std::max(1.0, std::abs(fb)));
}

TEST(Hawkes1D, FitOnPoissonDataRecoversRate) {
    const double T = 2700.0, rate = 0.4189;
    const int reps = 50;
    std::vector<double> mus, rates, epss, lrs;
    for (int r = 0; r < reps; ++r) {
        Rng rng = make_rng(21, {static_cast<std::uint64_t>(r)});
        const auto t = poisson_times(rate, T, rng);
        const auto fit = fit_hawkes1d(t, T);
        const double l0 = hawkes1d_loglik(t, T, {fit_poisson(t, T), 0.0, 1.0});
        // The Poisson special case is inside the search space.
        EXPECT_GE(fit.log_lik, l0 - 1e-6);
        EXPECT_GE(fit.params.beta, 1.0 / T);
        mus.push_back(fit.params.mu);
        rates.push_back(fit_poisson(t, T));
        epss.push_back(fit.params.eps);
        lrs.push_back(2.0 * (fit.log_lik - l0));
    }
    // Tolerances are three replicate standard deviations of each estimate.
    EXPECT_LT(mean(epss), 3.0 * std::sqrt(variance(epss)));
    EXPECT_NEAR(mean(mus), mean(rates), 3.0 * std::sqrt(variance(mus)));
    // Two extra free parameters: the likelihood-ratio statistic averages at most 2 under the null.
    EXPECT_LT(mean(lrs), 2.0 + 3.0 * 2.0 / std::sqrt(reps));
}

TEST(Hawkes1D, SimulatedMeanCountMatchesBranching) {
    const Hawkes1DParams p{0.5, 0.6, 2.0};
    const double T = 200.0;
    std::vector<double> counts;
    for (int r = 0; r < 1000; ++r) {
        Rng rng = make_rng(2, {static_cast<std::uint64_t>(r)});
        const auto t = hawkes1d_simulate(p, T, rng);
        counts.push_back(static_cast<double>(t.size()));
        ASSERT_TRUE(std::is_sorted(t.begin(), t.end()));
    }
    // Exact mean: mu T/(1-eps) less the edge loss eps mu (1 - e^{-(1-eps) beta T})/((1-eps)^2 beta).
    const double k = (1 - p.eps) * p.beta;
    const double exact = p.mu * T / (1 - p.eps) - p.eps * p.mu * (1 - std::exp(-k * T)) / ((1 - p.eps) * k);
    EXPECT_NEAR(mean(counts), exact, 3 * std::sqrt(variance(counts) / 1000));
}

TEST(Hawkes1D, ZeroExcitationSimulationIsPoisson) {
    const double T = 100.0, mu = 0.4189;
    std::vector<double> counts;
    for (int r = 0; r < 1000; ++r) {
        Rng rng = make_rng(3, {static_cast<std::uint64_t>(r)});
        counts.push_back(static_cast<double>(hawkes1d_simulate({mu, 0.0, 1.0}, T, rng).size()));
    }
    EXPECT_NEAR(mean(counts), mu * T, 3 * std::sqrt(mu * T / 1000));
    // Poisson dispersion: variance equals the mean.
    EXPECT_NEAR(variance(counts) / mean(counts), 1.0, 0.15);
    Rng a(7), b(7);
    EXPECT_EQ(hawkes1d_simulate({mu, 0.3, 1.0}, T, a), hawkes1d_simulate({mu, 0.3, 1.0}, T, b));
    EXPECT_THROW((void)hawkes1d_simulate({mu, 1.0, 1.0}, T, a), std::invalid_argument);
}

TEST(Fits, PoissonRate) {
    const std::vector<double> t(100, 1.0);
    EXPECT_DOUBLE_EQ(fit_poisson(t, 50.0), 2.0);
}

TEST(Fits, GammaShapeOnExponentialData) {
    std::vector<double> shapes;
    for (int r = 0; r < 40; ++r) {
        Rng rng = make_rng(13, {static_cast<std::uint64_t>(r)});
        std::exponential_distribution<double> ex(2.0);
        std::vector<double> x(500);
        for (auto& v : x) v = ex(rng);
        shapes.push_back(fit_gamma(x).shape);
    }
    // Asymptotic sd of the shape MLE at a = 1 is sqrt(1/(n (trigamma(1) - 1))).
    const double sd = std::sqrt(1.0 / (500 * (boost::math::trigamma(1.0) - 1.0)));
    EXPECT_NEAR(mean(shapes), 1.0, 3 * sd / std::sqrt(40.0) + 0.01);
}

TEST(Fits, GammaRenewalRecoversParameters) {
    Rng rng(17);
    std::gamma_distribution<double> gap(3.0, 1.0 / 1.5);
    std::vector<double> t;
    double s = 0.0;
    for (int i = 0; i < 20000; ++i) t.push_back(s += gap(rng));
    const auto fit = fit_gamma_renewal(t);
    EXPECT_NEAR(fit.shape, 3.0, 0.1);
    EXPECT_NEAR(fit.rate, 1.5, 0.05);
    // Score equation holds at the MLE.
    std::vector<double> d;
    for (std::size_t i = 1; i < t.size(); ++i) d.push_back(t[i] - t[i - 1]);
    double mlog = 0.0;
    for (double v : d) mlog += std::log(v) / static_cast<double>(d.size());
    EXPECT_NEAR(std::log(fit.shape) - digamma(fit.shape), std::log(mean(d)) - mlog, 1e-10);
}

TEST(Fits, DegenerateInputsThrow) {
    EXPECT_THROW((void)fit_gamma(std::vector<double>{2.0, 2.0, 2.0}), std::invalid_argument);
    EXPECT_THROW((void)fit_gamma(std::vector<double>{1.0}), std::invalid_argument);
    EXPECT_THROW((void)fit_gamma_renewal(std::vector<double>{0.0, 1.0, 2.0, 3.0}), std::invalid_argument);
    EXPECT_THROW((void)fit_poisson(std::vector<double>{1.0}, 0.0), std::invalid_argument);
}

TEST(Ecdf, SortedStepsEndAtOne) {
    const auto e = ecdf({3.0, 1.0, 2.0, 2.0});
    ASSERT_EQ(e.size(), 4u);
    EXPECT_DOUBLE_EQ(e.front().first, 1.0);
    EXPECT_DOUBLE_EQ(e.front().second, 0.25);
    EXPECT_DOUBLE_EQ(e.back().first, 3.0);
    EXPECT_DOUBLE_EQ(e.back().second, 1.0);
    EXPECT_THROW((void)ecdf({}), std::invalid_argument);
}
