#pragma once

// Clustering diagnostics for a single stream of event times: Ripley's K in
// one dimension, the exponential-kernel Hawkes process, Poisson and Gamma
// renewal fits, and empirical CDFs.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "flexpoint/core/math.hpp"
#include "flexpoint/core/random.hpp"
#include "flexpoint/optimize.hpp"

namespace flexpoint {

/// Edge-corrected estimate (T/n^2) sum_{i != j} w_ij 1(|t_i - t_j| <= t) with
/// w_ij = 1 when |t_i - t_j| <= min(t_i, T - t_i) and 2 otherwise.
[[nodiscard]] inline std::vector<double> k_function(std::span<const double> times, double T, std::span<const double> grid,
                                                    bool edge_correction = true) {
    const std::size_t n = times.size();
    if (n < 2) throw std::invalid_argument("K-function needs at least two events");
    if (!(T > 0.0)) throw std::invalid_argument("K-function needs a positive horizon");
    std::vector<double> out(grid.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double edge = std::min(times[i], T - times[i]);
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double d = std::abs(times[i] - times[j]);
            const double w = (!edge_correction || d <= edge) ? 1.0 : 2.0;
            for (std::size_t g = 0; g < grid.size(); ++g) {
                if (d <= grid[g]) out[g] += w;
            }
        }
    }
    const double scale = T / (static_cast<double>(n) * static_cast<double>(n));
    for (double& v : out) v *= scale;
    return out;
}

struct Hawkes1DParams {
    double mu{1.0};
    double eps{0.0};
    double beta{1.0};
};

struct Hawkes1DGradient {
    double mu{0.0}, eps{0.0}, beta{0.0};
};

/// Exact log-likelihood on (0, T] with an O(n) recursion for the decay sums.
[[nodiscard]] inline double hawkes1d_loglik(std::span<const double> times, double T, const Hawkes1DParams& p,
                                            Hawkes1DGradient* grad = nullptr) {
    if (!(p.mu > 0.0) || p.eps < 0.0 || !(p.beta > 0.0)) return kNegInf;
    double ll = 0.0, A = 0.0, B = 0.0;  // A = sum_j e^{-beta(t_i - t_j)}, B = dA/dbeta
    double g_mu = 0.0, g_eps = 0.0, g_beta = 0.0;
    double prev = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        const double t = times[i];
        if (i > 0) {
            const double dt = t - prev;
            if (dt < 0.0) throw std::invalid_argument("Hawkes times must be sorted");
            const double d = std::exp(-p.beta * dt);
            const double a_prev = A + 1.0;
            B = d * (B - dt * a_prev);
            A = d * a_prev;
        }
        const double lambda = p.mu + p.eps * p.beta * A;
        ll += std::log(lambda);
        g_mu += 1.0 / lambda;
        g_eps += p.beta * A / lambda;
        g_beta += p.eps * (A + p.beta * B) / lambda;
        prev = t;
    }
    double comp_eps = 0.0, comp_beta = 0.0;
    for (double t : times) {
        const double d = std::exp(-p.beta * (T - t));
        comp_eps += 1.0 - d;
        comp_beta += (T - t) * d;
    }
    ll -= p.mu * T + p.eps * comp_eps;
    if (grad) {
        grad->mu = g_mu - T;
        grad->eps = g_eps - comp_eps;
        grad->beta = g_beta - p.eps * comp_beta;
    }
    return ll;
}

struct Hawkes1DFit {
    Hawkes1DParams params;
    double log_lik{kNegInf};
    bool converged{false};
};

/// Multi-start maximum likelihood on (log mu, logit eps, log(beta - 1/T)).
/// Decays slower than 1/T are not identifiable within the window.
[[nodiscard]] inline Hawkes1DFit fit_hawkes1d(std::span<const double> times, double T, int starts = 8) {
    if (times.empty()) throw std::invalid_argument("Hawkes fit needs at least one event");
    if (!(T > 0.0)) throw std::invalid_argument("Hawkes fit needs a positive horizon");
    const double n = static_cast<double>(times.size());
    const double beta_min = 1.0 / T;
    auto decode = [&](std::span<const double> th) {
        return Hawkes1DParams{std::exp(th[0]), logistic(th[1]), beta_min + std::exp(th[2])};
    };
    const ObjectiveFn f = [&](std::span<const double> th, std::span<double> g) {
        const auto p = decode(th);
        Hawkes1DGradient hg;
        const double ll = hawkes1d_loglik(times, T, p, &hg);
        g[0] = hg.mu * p.mu;
        g[1] = hg.eps * p.eps * (1.0 - p.eps);
        g[2] = hg.beta * (p.beta - beta_min);
        return ll;
    };
    static constexpr double kEps[] = {0.1, 0.5};
    static constexpr double kBeta[] = {0.01, 0.1, 1.0, 10.0};
    Hawkes1DFit best;
    for (int s = 0; s < starts; ++s) {
        const double e0 = kEps[s % 2];
        const double b0 = kBeta[(s / 2) % 4] * std::pow(3.0, s / 8);
        std::vector<double> th{std::log(n / T * (1.0 - e0)), std::log(e0 / (1.0 - e0)), std::log(b0)};
        const auto r = maximize(f, th, 500, 1e-6);
        if (std::isfinite(r.value) && r.value > best.log_lik) {
            best.params = decode(r.x);
            best.log_lik = r.value;
            best.converged = r.converged;
        }
    }
    return best;
}

/// Ogata thinning on (0, T].
[[nodiscard]] inline std::vector<double> hawkes1d_simulate(const Hawkes1DParams& p, double T, Rng& rng) {
    if (!(p.eps < 1.0) || p.eps < 0.0 || !(p.mu > 0.0) || !(p.beta > 0.0)) throw std::invalid_argument("invalid Hawkes parameters");
    std::vector<double> out;
    double t = 0.0, excite = 0.0;  // excite = sum eps*beta*e^{-beta(t - t_j)} at time t
    while (true) {
        const double bound = p.mu + excite;
        const double w = std::exponential_distribution<double>{bound}(rng);
        const double t_new = t + w;
        if (t_new > T) break;
        excite *= std::exp(-p.beta * w);
        t = t_new;
        if (uniform01(rng) * bound <= p.mu + excite) {
            out.push_back(t);
            excite += p.eps * p.beta;
        }
    }
    return out;
}

[[nodiscard]] inline double fit_poisson(std::span<const double> times, double T) {
    if (!(T > 0.0)) throw std::invalid_argument("Poisson fit needs a positive horizon");
    return static_cast<double>(times.size()) / T;
}

struct GammaFit {
    double shape{1.0};
    double rate{1.0};
};

/// Gamma MLE by Newton iterations on log(a) - digamma(a) = log(mean) - mean(log).
[[nodiscard]] inline GammaFit fit_gamma(std::span<const double> values) {
    if (values.size() < 2) throw std::invalid_argument("Gamma fit needs at least two values");
    double s_log = 0.0;
    for (double v : values) {
        if (!(v > 0.0)) throw std::invalid_argument("Gamma fit needs positive values");
        s_log += std::log(v);
    }
    const double m = mean(values);
    const double s = std::log(m) - s_log / static_cast<double>(values.size());
    if (!(s > 1e-12)) throw std::invalid_argument("Gamma fit is degenerate for all-equal values");
    double a = (3.0 - s + std::sqrt((s - 3.0) * (s - 3.0) + 24.0 * s)) / (12.0 * s);
    for (int it = 0; it < 100; ++it) {
        const double f = std::log(a) - digamma(a) - s;
        const double df = 1.0 / a - boost::math::trigamma(a);
        const double next = a - f / df;
        const double a_new = next > 0.0 ? next : a / 2.0;
        if (std::abs(a_new - a) < 1e-12 * a) {
            a = a_new;
            break;
        }
        a = a_new;
    }
    return {a, a / m};
}

/// Gamma renewal fit on the inter-arrival times of a sorted time stream.
[[nodiscard]] inline GammaFit fit_gamma_renewal(std::span<const double> times) {
    if (times.size() < 3) throw std::invalid_argument("Gamma renewal fit needs at least three events");
    std::vector<double> d;
    for (std::size_t i = 1; i < times.size(); ++i) d.push_back(times[i] - times[i - 1]);
    return fit_gamma(d);
}

/// Sorted (value, i/n) pairs.
[[nodiscard]] inline std::vector<std::pair<double, double>> ecdf(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("ECDF needs at least one value");
    std::sort(values.begin(), values.end());
    std::vector<std::pair<double, double>> out;
    const double n = static_cast<double>(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out.emplace_back(values[i], static_cast<double>(i + 1) / n);
    return out;
}

}  // namespace flexpoint
