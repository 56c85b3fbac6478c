#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>

namespace flexpoint {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

[[nodiscard]] inline double digamma(double x) { return boost::math::digamma(x); }

[[nodiscard]] inline double logistic(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Pairwise summation; result does not depend on how callers chunk the input.
[[nodiscard]] inline double pairwise_sum(std::span<const double> xs) {
    if (xs.size() <= 8) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s;
    }
    const std::size_t half = xs.size() / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

[[nodiscard]] inline double log_sum_exp(std::span<const double> xs) {
    if (xs.empty()) return kNegInf;
    const double mx = *std::max_element(xs.begin(), xs.end());
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - mx);
    return mx + std::log(s);
}

[[nodiscard]] inline double log_mean_exp(std::span<const double> xs) {
    return log_sum_exp(xs) - std::log(static_cast<double>(xs.size()));
}

// log Dirichlet(x | conc) for a symmetric concentration.
[[nodiscard]] inline double dirichlet_log_density(std::span<const double> x, double conc) {
    const auto k = static_cast<double>(x.size());
    double lp = std::lgamma(k * conc) - k * std::lgamma(conc);
    if (conc != 1.0) {
        for (double v : x) lp += (conc - 1.0) * std::log(v);
    }
    return lp;
}

[[nodiscard]] inline double normal_log_density(double x, double mean, double sd) {
    constexpr double kHalfLog2Pi = 0.91893853320467274178;
    const double z = (x - mean) / sd;
    return -0.5 * z * z - std::log(sd) - kHalfLog2Pi;
}

[[nodiscard]] inline double exponential_log_density(double x, double rate) {
    return std::log(rate) - rate * x;
}

[[nodiscard]] inline double mean(std::span<const double> xs) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    return pairwise_sum(xs) / static_cast<double>(xs.size());
}

[[nodiscard]] inline double variance(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return s / static_cast<double>(xs.size() - 1);
}

// Linear-interpolated quantile (type 7), p in [0, 1].
[[nodiscard]] inline double quantile(std::vector<double> xs, double p) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(xs.begin(), xs.end());
    const double h = p * static_cast<double>(xs.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, xs.size() - 1);
    return xs[lo] + (h - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

[[nodiscard]] inline double median(std::vector<double> xs) { return quantile(std::move(xs), 0.5); }

}  // namespace flexpoint
