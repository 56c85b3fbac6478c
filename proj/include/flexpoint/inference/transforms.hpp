#pragma once

// Bijections between constrained blocks and unconstrained reals.
// Simplexes use stick-breaking on log-odds coordinates centred so that
// y = 0 maps to the uniform simplex.

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "flexpoint/core/math.hpp"

namespace flexpoint::transforms {

/// y has K-1 entries, x has K. Returns log |J|.
inline double simplex_constrain(std::span<const double> y, std::span<double> x, double scale = 1.0) {
    const std::size_t K = x.size();
    if (y.size() + 1 != K) throw std::invalid_argument("simplex transform size mismatch");
    double r = 1.0, log_jac = 0.0;
    for (std::size_t k = 0; k + 1 < K; ++k) {
        const double z = logistic(y[k] - std::log(static_cast<double>(K - k - 1)));
        x[k] = scale * r * z;
        log_jac += std::log(z) + std::log1p(-z) + std::log(r);
        r *= 1.0 - z;
    }
    x[K - 1] = scale * r;
    return log_jac;
}

inline void simplex_unconstrain(std::span<const double> x, std::span<double> y, double scale = 1.0) {
    const std::size_t K = x.size();
    if (y.size() + 1 != K) throw std::invalid_argument("simplex transform size mismatch");
    // Stick remainders as suffix sums, which avoids cancellation.
    double rest = x[K - 1] / scale;
    for (std::size_t k = K - 1; k-- > 0;) {
        const double xk = x[k] / scale;
        y[k] = (xk > 0.0 && rest > 0.0) ? std::log(xk) - std::log(rest) + std::log(static_cast<double>(K - k - 1)) : 0.0;
        rest += xk;
    }
}

/// Adds d(f + log|J|)/dy into gy given gx = df/dx.
inline void simplex_backprop(std::span<const double> y, std::span<const double> gx, std::span<double> gy, double scale = 1.0,
                             bool with_jacobian = true) {
    const std::size_t K = gx.size();
    // Forward pass to recover z_k and r_k.
    thread_local std::vector<double> z, r;
    z.resize(K);
    r.resize(K);
    double rem = 1.0;
    for (std::size_t k = 0; k + 1 < K; ++k) {
        r[k] = rem;
        z[k] = logistic(y[k] - std::log(static_cast<double>(K - k - 1)));
        rem *= 1.0 - z[k];
    }
    r[K - 1] = rem;
    double rbar = scale * gx[K - 1];
    for (std::size_t k = K - 1; k-- > 0;) {
        const double g = scale * gx[k];
        const double zbar = g * r[k] - rbar * r[k];
        const double jz = with_jacobian ? 1.0 - 2.0 * z[k] : 0.0;
        gy[k] += zbar * z[k] * (1.0 - z[k]) + jz;
        rbar = g * z[k] + rbar * (1.0 - z[k]) + (with_jacobian ? 1.0 / r[k] : 0.0);
    }
}

}  // namespace flexpoint::transforms
