#pragma once

// Gradient-based maximisation through GSL's BFGS2 minimiser.

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>
#include <gsl/gsl_vector.h>

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace flexpoint {

/// Objective value with its gradient written into grad.
using ObjectiveFn = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct OptimResult {
    std::vector<double> x;
    double value{-std::numeric_limits<double>::infinity()};
    int iterations{0};
    bool converged{false};
};

namespace detail {

struct GslObjective {
    const ObjectiveFn* f;
    std::vector<double> x, g;
};

inline double gsl_f(const gsl_vector* v, void* params) {
    auto* o = static_cast<GslObjective*>(params);
    for (std::size_t i = 0; i < o->x.size(); ++i) o->x[i] = gsl_vector_get(v, i);
    const double val = (*o->f)(o->x, o->g);
    return std::isfinite(val) ? -val : std::numeric_limits<double>::max();
}

inline void gsl_df(const gsl_vector* v, void* params, gsl_vector* df) {
    auto* o = static_cast<GslObjective*>(params);
    for (std::size_t i = 0; i < o->x.size(); ++i) o->x[i] = gsl_vector_get(v, i);
    (*o->f)(o->x, o->g);
    for (std::size_t i = 0; i < o->g.size(); ++i) gsl_vector_set(df, i, std::isfinite(o->g[i]) ? -o->g[i] : 0.0);
}

inline void gsl_fdf(const gsl_vector* v, void* params, double* f, gsl_vector* df) {
    auto* o = static_cast<GslObjective*>(params);
    for (std::size_t i = 0; i < o->x.size(); ++i) o->x[i] = gsl_vector_get(v, i);
    const double val = (*o->f)(o->x, o->g);
    *f = std::isfinite(val) ? -val : std::numeric_limits<double>::max();
    for (std::size_t i = 0; i < o->g.size(); ++i) gsl_vector_set(df, i, std::isfinite(o->g[i]) ? -o->g[i] : 0.0);
}

}  // namespace detail

/// Maximises f from x0. Stops when the gradient norm falls below gtol.
[[nodiscard]] inline OptimResult maximize(const ObjectiveFn& f, std::vector<double> x0, int max_iter = 1000, double gtol = 1e-6) {
    OptimResult res;
    const std::size_t n = x0.size();
    if (n == 0) {
        std::vector<double> g;
        res.value = f(x0, g);
        res.x = std::move(x0);
        res.converged = true;
        return res;
    }
    gsl_set_error_handler_off();
    detail::GslObjective obj{&f, std::vector<double>(n), std::vector<double>(n)};
    gsl_multimin_function_fdf fn{&detail::gsl_f, &detail::gsl_df, &detail::gsl_fdf, n, &obj};
    gsl_vector* start = gsl_vector_alloc(n);
    for (std::size_t i = 0; i < n; ++i) gsl_vector_set(start, i, x0[i]);
    gsl_multimin_fdfminimizer* s = gsl_multimin_fdfminimizer_alloc(gsl_multimin_fdfminimizer_vector_bfgs2, n);
    gsl_multimin_fdfminimizer_set(s, &fn, start, 0.1, 0.1);
    int status = GSL_CONTINUE;
    for (res.iterations = 0; res.iterations < max_iter && status == GSL_CONTINUE; ++res.iterations) {
        if (gsl_multimin_fdfminimizer_iterate(s) != GSL_SUCCESS) break;
        status = gsl_multimin_test_gradient(s->gradient, gtol);
    }
    res.converged = status == GSL_SUCCESS;
    res.x.resize(n);
    for (std::size_t i = 0; i < n; ++i) res.x[i] = gsl_vector_get(s->x, i);
    res.value = -s->f;
    gsl_multimin_fdfminimizer_free(s);
    gsl_vector_free(start);
    return res;
}

}  // namespace flexpoint
