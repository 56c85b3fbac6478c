#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "flexpoint/flexpoint.hpp"

namespace fpt {

using namespace flexpoint;

inline constexpr const char* kSnapshotCsv =
    "i,id,period,team_id,time,zone,mark\n"
    "1,101,1,1,0,2,18\n"
    "2,101,1,1,1,2,19\n"
    "3,101,1,2,3,1,8\n"
    "4,101,1,1,6,3,16\n"
    "5,101,1,1,8,3,18\n"
    "6,101,1,1,15,2,18\n"
    "7,101,1,1,16,1,19\n"
    "8,101,1,2,19,1,12\n";

// Random marked sequences with exponential gaps; teams rotate over games.
inline Dataset random_dataset(int M, int Z, int periods, int events, std::uint64_t seed, int teams = 4, double mean_gap = 2.0) {
    Rng rng(seed);
    Dataset ds;
    ds.taxonomy = MarkTaxonomy::generic(M);
    ds.num_zones = Z;
    ds.num_teams = teams;
    std::exponential_distribution<double> gap(1.0 / mean_gap);
    std::uniform_int_distribution<int> zone(1, Z), mark(1, M);
    for (int p = 0; p < periods; ++p) {
        GamePeriod gp;
        gp.game_id = 100 + p;
        gp.period = 1;
        gp.home_team = p % teams + 1;
        gp.away_team = (p + 1) % teams + 1;
        double t = 0.0;
        for (int i = 0; i < events; ++i) {
            const MarkId m = mark(rng);
            gp.events.push_back({t, zone(rng), m, m <= M / 2 ? gp.home_team : gp.away_team});
            t += 0.05 + gap(rng);
        }
        gp.t_end = t;
        ds.periods.push_back(std::move(gp));
    }
    return ds;
}

inline std::vector<double> random_simplex(std::size_t k, Rng& rng, double conc = 1.0) {
    std::vector<double> c(k, conc);
    return sample_dirichlet(c, rng);
}

// Random constrained vector covering every block of the model.
inline std::vector<double> random_x(const ModelSpec& spec, Rng& rng, double spread = 1.0) {
    const ParamCodec codec(spec);
    std::normal_distribution<double> nd(0.0, spread);
    std::vector<double> u(codec.u_dim());
    for (auto& v : u) v = nd(rng);
    std::vector<double> x(codec.x_dim(), 0.0);
    codec.constrain(u, x);
    for (const auto& b : codec.blocks()) {
        if (b.sampled) continue;
        auto xb = std::span<double>(x).subspan(b.x_offset, b.x_size());
        if (b.transform == Transform::Simplex) {
            std::size_t off = 0;
            for (int r : b.row_sizes) {
                const auto s = random_simplex(static_cast<std::size_t>(r), rng);
                std::copy(s.begin(), s.end(), xb.begin() + static_cast<std::ptrdiff_t>(off));
                off += static_cast<std::size_t>(r);
            }
        } else {
            for (auto& v : xb) v = std::exp(nd(rng)) * 0.05;
        }
    }
    return x;
}

// Sbeta parameters with uniform Gamma times and uniform zone rows.
inline ModelParams sbeta_params(const ModelSpec& spec, double a, double b, double alpha, double beta, std::vector<double> delta,
                                std::vector<double> gamma) {
    ModelParams p;
    p.time = TimeParams::uniform(spec.num_marks, a, b);
    p.zones = ZoneParams(spec.num_zones, spec.num_marks, 1.0 / spec.num_zones);
    p.marks = mark_model_skeleton(spec);
    p.marks.exc.alpha = alpha;
    p.marks.exc.beta = {beta};
    p.marks.exc.delta = std::move(delta);
    p.marks.exc.gamma = std::move(gamma);
    return p;
}

inline ModelParams random_params(const ModelSpec& spec, Rng& rng, double spread = 1.0) {
    const ParamCodec codec(spec);
    return unflatten(spec, codec, random_x(spec, rng, spread));
}

inline RuleSet screen(const Dataset& ds, int window, std::size_t n) { return select_rules(count_pair_support(ds, window), n); }

}  // namespace fpt
