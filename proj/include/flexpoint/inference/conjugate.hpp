#pragma once

// Closed-form posteriors: Dirichlet rows for the first-order mark chain and
// the zone chain, Gamma cells for the Poisson rates.

#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "flexpoint/core/random.hpp"
#include "flexpoint/event_core.hpp"
#include "flexpoint/zone_model.hpp"

namespace flexpoint {

/// Dirichlet concentrations for theta[(z, m_prev) -> m], same layout as FomcParams.
struct FomcPosterior {
    int num_zones{0};
    int num_marks{0};
    std::vector<double> conc;
};

[[nodiscard]] inline FomcPosterior fomc_posterior(const Dataset& ds, double prior_conc = 1.0) {
    if (!(prior_conc > 0.0)) throw std::invalid_argument("Dirichlet concentration must be positive");
    const int M = ds.num_marks(), Z = ds.num_zones;
    FomcPosterior post{Z, M, std::vector<double>(static_cast<std::size_t>(Z * M * M), prior_conc)};
    for (const auto& p : ds.periods) {
        for (std::size_t i = 1; i < p.events.size(); ++i) {
            const Event& e = p.events[i];
            const auto row = static_cast<std::size_t>((e.zone - 1) * M + (p.events[i - 1].mark - 1));
            post.conc[row * static_cast<std::size_t>(M) + static_cast<std::size_t>(e.mark - 1)] += 1.0;
        }
    }
    return post;
}

[[nodiscard]] inline std::vector<double> sample_fomc(const FomcPosterior& post, Rng& rng) {
    std::vector<double> theta;
    theta.reserve(post.conc.size());
    const auto M = static_cast<std::size_t>(post.num_marks);
    for (std::size_t off = 0; off < post.conc.size(); off += M) {
        const auto row = sample_dirichlet(std::span<const double>(post.conc).subspan(off, M), rng);
        theta.insert(theta.end(), row.begin(), row.end());
    }
    return theta;
}

/// Gamma(shape, rate) per (m, z) cell, layout as MsthpParams.
struct MsthpPosterior {
    int num_zones{0};
    int num_marks{0};
    std::vector<double> shape, rate;
    std::vector<double> counts;  // q[m, z]
    double horizon{0.0};         // summed period horizons
};

[[nodiscard]] inline MsthpPosterior msthp_posterior(const Dataset& ds, double prior_shape = 1.0, double prior_rate = 0.01) {
    if (!(prior_shape > 0.0) || !(prior_rate > 0.0)) throw std::invalid_argument("Gamma prior parameters must be positive");
    const int M = ds.num_marks(), Z = ds.num_zones;
    MsthpPosterior post{Z, M, {}, {}, std::vector<double>(static_cast<std::size_t>(M * Z), 0.0), 0.0};
    for (const auto& p : ds.periods) {
        post.horizon += p.t_end;
        for (std::size_t i = 1; i < p.events.size(); ++i) {
            const Event& e = p.events[i];
            post.counts[static_cast<std::size_t>((e.mark - 1) * Z + (e.zone - 1))] += 1.0;
        }
    }
    post.shape = post.counts;
    for (double& s : post.shape) s += prior_shape;
    post.rate.assign(post.counts.size(), post.horizon + prior_rate);
    return post;
}

[[nodiscard]] inline std::vector<double> sample_msthp(const MsthpPosterior& post, Rng& rng) {
    std::vector<double> rho(post.shape.size());
    for (std::size_t i = 0; i < rho.size(); ++i) {
        rho[i] = std::gamma_distribution<double>{post.shape[i], 1.0 / post.rate[i]}(rng);
    }
    return rho;
}

}  // namespace flexpoint
