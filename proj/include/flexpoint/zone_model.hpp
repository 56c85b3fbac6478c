#pragma once

// First-order Markov chain over zones whose state is (previous zone, previous mark),
// with a conjugate Dirichlet posterior per row.

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "flexpoint/core/random.hpp"
#include "flexpoint/event_core.hpp"

namespace flexpoint {

/// Row-major matrix of Z*M rows (state) by Z columns.
struct ZoneTable {
    int num_zones{0};
    int num_marks{0};
    std::vector<double> values;

    ZoneTable() = default;
    ZoneTable(int Z, int M, double fill = 0.0)
        : num_zones(Z), num_marks(M), values(static_cast<std::size_t>(Z * M * Z), fill) {}

    [[nodiscard]] int num_states() const noexcept { return num_zones * num_marks; }
    [[nodiscard]] static int state_of(ZoneId z_prev, MarkId m_prev, int M) noexcept { return (z_prev - 1) * M + (m_prev - 1); }
    [[nodiscard]] int state(ZoneId z_prev, MarkId m_prev) const noexcept { return state_of(z_prev, m_prev, num_marks); }
    [[nodiscard]] double& at(int state, ZoneId z) { return values[static_cast<std::size_t>(state * num_zones + (z - 1))]; }
    [[nodiscard]] double at(int state, ZoneId z) const { return values[static_cast<std::size_t>(state * num_zones + (z - 1))]; }
    [[nodiscard]] std::span<const double> row(int state) const {
        return std::span<const double>(values).subspan(static_cast<std::size_t>(state * num_zones), static_cast<std::size_t>(num_zones));
    }
    [[nodiscard]] std::span<double> row(int state) {
        return std::span<double>(values).subspan(static_cast<std::size_t>(state * num_zones), static_cast<std::size_t>(num_zones));
    }
};

using ZoneCounts = ZoneTable;     // y[state, z]
using ZoneParams = ZoneTable;     // eta[state, z], rows are simplexes
using ZonePosterior = ZoneTable;  // alpha[state, z] Dirichlet concentrations

[[nodiscard]] inline ZoneCounts zone_transition_counts(const Dataset& ds) {
    ZoneCounts y(ds.num_zones, ds.num_marks());
    for (const auto& p : ds.periods) {
        for (std::size_t i = 1; i < p.events.size(); ++i) {
            const Event& prev = p.events[i - 1];
            y.at(y.state(prev.zone, prev.mark), p.events[i].zone) += 1.0;
        }
    }
    return y;
}

[[nodiscard]] inline ZonePosterior zone_posterior(const ZoneCounts& y, double nu) {
    if (!(nu > 0.0)) throw std::invalid_argument("Dirichlet concentration nu must be positive");
    ZonePosterior post = y;
    for (double& v : post.values) v += nu;
    return post;
}

[[nodiscard]] inline std::vector<double> dirichlet_mean(std::span<const double> conc) {
    double s = 0.0;
    for (double c : conc) s += c;
    std::vector<double> m(conc.begin(), conc.end());
    for (double& v : m) v /= s;
    return m;
}

inline void check_simplex(std::span<const double> row, double tol = 1e-9) {
    double s = 0.0;
    for (double v : row) {
        if (!(v >= 0.0)) throw std::domain_error("probability row has a negative or NaN entry");
        s += v;
    }
    if (std::abs(s - 1.0) > tol) throw std::domain_error("probability row does not sum to 1");
}

[[nodiscard]] inline double zone_log_prob(int state, ZoneId z_next, const ZoneParams& eta) {
    check_simplex(eta.row(state));
    return std::log(eta.at(state, z_next));
}

[[nodiscard]] inline ZoneId sample_zone(int state, const ZoneParams& eta, Rng& rng) {
    check_simplex(eta.row(state));
    return static_cast<ZoneId>(sample_categorical(eta.row(state), rng) + 1);
}

[[nodiscard]] inline std::vector<double> sample_dirichlet(std::span<const double> conc, Rng& rng) {
    std::vector<double> x(conc.size());
    double s = 0.0;
    for (std::size_t k = 0; k < conc.size(); ++k) {
        x[k] = std::gamma_distribution<double>{conc[k], 1.0}(rng);
        s += x[k];
    }
    for (double& v : x) v /= s;
    return x;
}

/// One posterior draw of eta. States never observed (row == prior) take the
/// prior mean instead of a random draw.
[[nodiscard]] inline ZoneParams sample_zone_params(const ZonePosterior& post, const ZoneCounts& y, Rng& rng) {
    ZoneParams eta(post.num_zones, post.num_marks);
    for (int s = 0; s < post.num_states(); ++s) {
        double n = 0.0;
        for (double v : y.row(s)) n += v;
        const auto draw = n > 0.0 ? sample_dirichlet(post.row(s), rng) : dirichlet_mean(post.row(s));
        std::copy(draw.begin(), draw.end(), eta.row(s).begin());
    }
    return eta;
}

[[nodiscard]] inline ZoneParams zone_posterior_mean(const ZonePosterior& post) {
    ZoneParams eta(post.num_zones, post.num_marks);
    for (int s = 0; s < post.num_states(); ++s) {
        const auto m = dirichlet_mean(post.row(s));
        std::copy(m.begin(), m.end(), eta.row(s).begin());
    }
    return eta;
}

[[nodiscard]] inline double zone_log_likelihood(const Dataset& ds, const ZoneParams& eta) {
    double ll = 0.0;
    for (const auto& p : ds.periods) {
        for (std::size_t i = 1; i < p.events.size(); ++i) {
            const Event& prev = p.events[i - 1];
            ll += std::log(eta.at(eta.state(prev.zone, prev.mark), p.events[i].zone));
        }
    }
    return ll;
}

}  // namespace flexpoint
