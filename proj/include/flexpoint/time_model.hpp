#pragma once

// Mark-conditional Gamma inter-arrival times: dt | previous mark m ~ Gamma(a[m], b[m]),
// b a rate in 1/seconds.

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "flexpoint/core/math.hpp"
#include "flexpoint/core/random.hpp"
#include "flexpoint/event_core.hpp"

namespace flexpoint {

struct TimeParams {
    std::vector<double> shape;  // a[m-1]
    std::vector<double> rate;   // b[m-1]

    [[nodiscard]] static TimeParams uniform(int num_marks, double a, double b) {
        return {std::vector<double>(static_cast<std::size_t>(num_marks), a), std::vector<double>(static_cast<std::size_t>(num_marks), b)};
    }
    [[nodiscard]] bool valid() const {
        if (shape.size() != rate.size()) return false;
        for (std::size_t m = 0; m < shape.size(); ++m) {
            if (!(shape[m] > 0.0) || !(rate[m] > 0.0)) return false;
        }
        return true;
    }
};

struct TimePrior {
    double shape_rate{0.01};  // a'
    double rate_rate{0.01};   // b'
};

[[nodiscard]] inline double gamma_log_density(double dt, double shape, double rate) {
    return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(dt) - rate * dt;
}

[[nodiscard]] inline double time_log_density(double dt, MarkId prev_mark, const TimeParams& p) {
    if (!(dt > 0.0)) throw std::domain_error("inter-arrival time must be positive");
    const auto m = static_cast<std::size_t>(prev_mark - 1);
    return gamma_log_density(dt, p.shape.at(m), p.rate.at(m));
}

// d/da and d/db of the Gamma log-density.
struct GammaScore {
    double d_shape;
    double d_rate;
};

[[nodiscard]] inline GammaScore gamma_log_density_gradient(double dt, double shape, double rate) {
    return {std::log(rate) - digamma(shape) + std::log(dt), shape / rate - dt};
}

[[nodiscard]] inline double time_log_prior(const TimeParams& p, const TimePrior& pr) {
    double lp = 0.0;
    for (double a : p.shape) lp += exponential_log_density(a, pr.shape_rate);
    for (double b : p.rate) lp += exponential_log_density(b, pr.rate_rate);
    return lp;
}

[[nodiscard]] inline double sample_interarrival(MarkId prev_mark, const TimeParams& p, Rng& rng) {
    const auto m = static_cast<std::size_t>(prev_mark - 1);
    const double a = p.shape.at(m), b = p.rate.at(m);
    if (!(a > 0.0) || !(b > 0.0)) throw std::domain_error("degenerate Gamma parameters");
    double dt = 0.0;
    while (!(dt > 0.0)) dt = std::gamma_distribution<double>{a, 1.0 / b}(rng);
    return dt;
}

/// Per-mark sufficient statistics of the modelled inter-arrival times.
struct InterarrivalStats {
    std::vector<double> count, sum_dt, sum_log_dt;

    [[nodiscard]] static InterarrivalStats collect(const Dataset& ds) {
        const auto M = static_cast<std::size_t>(ds.num_marks());
        InterarrivalStats s{std::vector<double>(M), std::vector<double>(M), std::vector<double>(M)};
        for (const auto& p : ds.periods) {
            for (std::size_t i = 1; i < p.events.size(); ++i) {
                const auto m = static_cast<std::size_t>(p.events[i - 1].mark - 1);
                const double dt = p.events[i].t - p.events[i - 1].t;
                if (!(dt > 0.0)) throw std::domain_error("non-positive inter-arrival time in period " + p.key());
                s.count[m] += 1.0;
                s.sum_dt[m] += dt;
                s.sum_log_dt[m] += std::log(dt);
            }
        }
        return s;
    }

    // Log-likelihood; gradients w.r.t. shape/rate are added into the outputs when given.
    double log_likelihood(const TimeParams& p, std::vector<double>* d_shape = nullptr, std::vector<double>* d_rate = nullptr) const {
        double ll = 0.0;
        for (std::size_t m = 0; m < count.size(); ++m) {
            if (count[m] == 0.0) continue;
            const double a = p.shape[m], b = p.rate[m];
            ll += count[m] * (a * std::log(b) - std::lgamma(a)) + (a - 1.0) * sum_log_dt[m] - b * sum_dt[m];
            if (d_shape) (*d_shape)[m] += count[m] * (std::log(b) - digamma(a)) + sum_log_dt[m];
            if (d_rate) (*d_rate)[m] += count[m] * a / b - sum_dt[m];
        }
        return ll;
    }
};

}  // namespace flexpoint
