#pragma once

// Split-chain R-hat, multi-chain effective sample size and HPD intervals.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "flexpoint/core/math.hpp"

namespace flexpoint {

using ChainDraws = std::vector<std::vector<double>>;  // [chain][iteration]

namespace detail {

inline ChainDraws split_chains(const ChainDraws& chains) {
    ChainDraws out;
    for (const auto& c : chains) {
        const std::size_t half = c.size() / 2;
        out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
        // Odd lengths drop the middle draw.
        out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
    }
    return out;
}

inline bool degenerate(const ChainDraws& chains) {
    for (const auto& c : chains) {
        if (c.size() < 2 || variance(c) <= 0.0) return true;
    }
    return false;
}

}  // namespace detail

/// Split R-hat; NaN when any split chain has zero variance.
[[nodiscard]] inline double rhat(const ChainDraws& chains) {
    if (chains.size() < 2 && (chains.empty() || chains[0].size() < 4)) throw std::invalid_argument("R-hat needs at least two chains");
    const ChainDraws split = detail::split_chains(chains);
    const std::size_t n = split.front().size();
    for (const auto& c : split) {
        if (c.size() != n) throw std::invalid_argument("R-hat needs equal-length chains");
    }
    if (n < 2 || detail::degenerate(split)) return std::numeric_limits<double>::quiet_NaN();
    std::vector<double> means, vars;
    for (const auto& c : split) {
        means.push_back(mean(c));
        vars.push_back(variance(c));
    }
    const double W = mean(vars);
    const double B_over_n = variance(means);
    const double nn = static_cast<double>(n);
    const double var_plus = (nn - 1.0) / nn * W + B_over_n;
    return std::sqrt(var_plus / W);
}

/// Multi-chain ESS on split chains with Geyer's initial monotone sequence;
/// can exceed the draw count for antithetic chains. NaN when degenerate.
[[nodiscard]] inline double ess(const ChainDraws& chains) {
    if (chains.empty()) throw std::invalid_argument("ESS needs at least one chain");
    const ChainDraws split = chains.front().size() >= 4 ? detail::split_chains(chains) : chains;
    const std::size_t C = split.size();
    const std::size_t n = split.front().size();
    for (const auto& c : split) {
        if (c.size() != n) throw std::invalid_argument("ESS needs equal-length chains");
    }
    if (n < 4 || detail::degenerate(split)) return std::numeric_limits<double>::quiet_NaN();

    std::vector<double> means(C);
    std::vector<std::vector<double>> centred(C);
    for (std::size_t c = 0; c < C; ++c) {
        means[c] = mean(split[c]);
        centred[c].resize(n);
        for (std::size_t i = 0; i < n; ++i) centred[c][i] = split[c][i] - means[c];
    }
    auto acov_mean = [&](std::size_t lag) {
        double s = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            double a = 0.0;
            for (std::size_t i = 0; i + lag < n; ++i) a += centred[c][i] * centred[c][i + lag];
            s += a / static_cast<double>(n);
        }
        return s / static_cast<double>(C);
    };
    const double nn = static_cast<double>(n);
    const double W = acov_mean(0) * nn / (nn - 1.0);
    double var_plus = W * (nn - 1.0) / nn;
    if (C > 1) var_plus += variance(means);

    std::vector<double> rho(n, 0.0);
    rho[0] = 1.0;
    double even = 1.0;
    double odd = 1.0 - (W - acov_mean(1)) / var_plus;
    rho[1] = odd;
    std::size_t s = 1;
    while (s < n - 4 && even + odd > 0.0) {
        even = 1.0 - (W - acov_mean(s + 1)) / var_plus;
        odd = 1.0 - (W - acov_mean(s + 2)) / var_plus;
        if (even + odd >= 0.0) {
            rho[s + 1] = even;
            rho[s + 2] = odd;
        }
        s += 2;
    }
    const std::size_t max_s = s;
    if (even > 0.0 && max_s + 1 < n) rho[max_s + 1] = even;
    for (std::size_t k = 1; k + 3 <= max_s; k += 2) {
        if (rho[k + 1] + rho[k + 2] > rho[k - 1] + rho[k]) {
            rho[k + 1] = (rho[k - 1] + rho[k]) / 2.0;
            rho[k + 2] = rho[k + 1];
        }
    }
    const double total = static_cast<double>(C) * nn;
    double tau = -1.0;
    for (std::size_t k = 0; k <= max_s && k < n; ++k) tau += 2.0 * rho[k];
    if (max_s + 1 < n) tau += rho[max_s + 1];
    tau = std::max(tau, 1.0 / std::log10(total));
    return total / tau;
}

/// Shortest interval containing ceil(mass * R) of the sorted draws.
[[nodiscard]] inline std::pair<double, double> hpd_interval(std::vector<double> draws, double mass) {
    if (!(mass > 0.0 && mass < 1.0)) throw std::invalid_argument("HPD mass must lie in (0, 1)");
    if (draws.size() < 100) throw std::invalid_argument("HPD interval needs at least 100 draws");
    std::sort(draws.begin(), draws.end());
    const auto R = draws.size();
    const auto k = static_cast<std::size_t>(std::ceil(mass * static_cast<double>(R)));
    std::size_t best = 0;
    double width = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + k <= R; ++i) {
        const double w = draws[i + k - 1] - draws[i];
        if (w < width) {
            width = w;
            best = i;
        }
    }
    return {draws[best], draws[best + k - 1]};
}

}  // namespace flexpoint
