#pragma once

// Model definition, parameter blocks and the constrained <-> unconstrained codec.

#include <array>
#include <cmath>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "flexpoint/event_core.hpp"
#include "flexpoint/inference/transforms.hpp"
#include "flexpoint/mark_models.hpp"
#include "flexpoint/screening.hpp"
#include "flexpoint/time_model.hpp"
#include "flexpoint/zone_model.hpp"

namespace flexpoint {

struct Priors {
    TimePrior time;
    double zone_conc{1.0};        // nu
    double delta_conc{1.0};       // global background
    double zone_delta_conc{1.0};  // per-zone background
    double beta_rate{0.1};
    double gamma_conc{1.0};
    double sigma_alpha{10.0};
    double sigma_logit{10.0};     // phi and omega
    double fomc_conc{1.0};
    double msthp_shape{1.0};
    double msthp_rate{0.01};
};

struct ModelOptions {
    bool tie_home_away{false};
    bool sample_zones{false};  // fit the zone block by HMC instead of its closed form
    std::optional<TeamId> reference_team;
    Priors priors;
};

struct ModelSpec {
    Family family{Family::SBeta};
    int num_marks{0};
    int num_zones{kDefaultZones};
    int num_teams{0};
    TeamId reference_team{1};
    ExcitationStructure structure;
    bool tie_home_away{false};
    bool sample_zones{false};
    bool include_jacobian{true};
    Priors priors;
    std::vector<int> phi_triples;                        // non-baseline triples
    std::vector<std::pair<TeamId, MarkId>> omega_free;  // free team-ability cells

    [[nodiscard]] static ModelSpec make(Family family, const Dataset& ds, const RuleSet* rules = nullptr, const ModelOptions& opt = {}) {
        ModelSpec s;
        s.family = family;
        s.num_marks = ds.num_marks();
        s.num_zones = ds.num_zones;
        s.num_teams = ds.num_teams;
        s.tie_home_away = opt.tie_home_away;
        s.sample_zones = opt.sample_zones;
        s.priors = opt.priors;
        if (is_matrix(family) != (rules != nullptr)) {
            throw std::invalid_argument("a rule set is required exactly for the matrix families");
        }
        if (s.tie_home_away) {
            if (!is_matrix(family)) throw std::invalid_argument("home/away tying applies to per-zone backgrounds only");
            if (!ds.taxonomy.paired() || s.num_zones != 3) throw std::invalid_argument("home/away tying needs paired marks and three zones");
        }
        if (!rules) return s;

        std::vector<double> freq(static_cast<std::size_t>(s.num_marks), 0.0);
        for (const auto& p : ds.periods) {
            for (std::size_t i = 1; i < p.events.size(); ++i) freq[static_cast<std::size_t>(p.events[i].mark - 1)] += 1.0;
        }
        s.structure = ExcitationStructure::from_rules(*rules, s.num_marks, s.num_zones, freq);
        if (family != Family::MBetaA) return s;

        if (!ds.taxonomy.paired()) throw std::invalid_argument("team abilities need home/away paired marks");
        std::set<TeamId> home_teams, away_teams;
        for (const auto& p : ds.periods) {
            if (p.home_team < 1 || p.away_team < 1) throw std::invalid_argument("team abilities need home/away teams for every period");
            home_teams.insert(p.home_team);
            away_teams.insert(p.away_team);
        }
        if (opt.reference_team) {
            s.reference_team = *opt.reference_team;
        } else {
            std::set<TeamId> all = home_teams;
            all.insert(away_teams.begin(), away_teams.end());
            s.reference_team = all.empty() ? 1 : *all.begin();
        }
        std::set<MarkId> targets;
        for (std::size_t k = 0; k < s.structure.size(); ++k) {
            if (s.structure.is_baseline(static_cast<int>(k))) continue;
            s.phi_triples.push_back(static_cast<int>(k));
            targets.insert(s.structure.triples[k].target);
        }
        for (TeamId c = 1; c <= s.num_teams; ++c) {
            if (c == s.reference_team) continue;
            for (MarkId m : targets) {
                const bool home_mark = ds.taxonomy.is_home(m);
                if ((home_mark && home_teams.count(c)) || (!home_mark && away_teams.count(c))) s.omega_free.emplace_back(c, m);
            }
        }
        return s;
    }

    [[nodiscard]] bool has_time_block() const noexcept { return family != Family::Msthp; }
    [[nodiscard]] bool has_zone_block() const noexcept { return family != Family::Msthp; }
};

enum class Transform { Identity, Log, Simplex };

struct ParamBlock {
    std::string name;
    Transform transform{Transform::Identity};
    std::vector<int> row_sizes;  // simplex rows; a single row otherwise
    double scale{1.0};           // simplex total
    bool sampled{true};          // false: drawn from a closed-form posterior
    std::size_t x_offset{0};
    std::size_t u_offset{0};
    std::vector<std::array<int, 3>> index;  // 1-based indices per element, 0 = unused

    [[nodiscard]] std::size_t x_size() const {
        std::size_t n = 0;
        for (int r : row_sizes) n += static_cast<std::size_t>(r);
        return n;
    }
    [[nodiscard]] std::size_t u_size() const {
        if (!sampled) return 0;
        if (transform != Transform::Simplex) return x_size();
        std::size_t n = 0;
        for (int r : row_sizes) n += static_cast<std::size_t>(r - 1);
        return n;
    }
    [[nodiscard]] std::string label(std::size_t i) const {
        std::string s = name;
        const auto& ix = index[i];
        if (ix[0] == 0) return s;
        s += '[' + std::to_string(ix[0]);
        for (int d = 1; d < 3 && ix[static_cast<std::size_t>(d)] != 0; ++d) s += ',' + std::to_string(ix[static_cast<std::size_t>(d)]);
        return s + ']';
    }
};

[[nodiscard]] inline ParamBlock make_block(std::string name, Transform t, std::vector<int> rows, double scale, bool sampled) {
    ParamBlock b;
    b.name = std::move(name);
    b.transform = t;
    b.row_sizes = std::move(rows);
    b.scale = scale;
    b.sampled = sampled;
    return b;
}

class ParamCodec {
public:
    explicit ParamCodec(const ModelSpec& spec) {
        const int M = spec.num_marks, Z = spec.num_zones;
        if (spec.has_time_block()) {
            add_vector("a", Transform::Log, M, [](int i) { return std::array<int, 3>{i + 1, 0, 0}; });
            add_vector("b", Transform::Log, M, [](int i) { return std::array<int, 3>{i + 1, 0, 0}; });
        }
        if (spec.has_zone_block()) {
            ParamBlock eta = make_block("eta", Transform::Simplex, std::vector<int>(static_cast<std::size_t>(Z * M), Z), 1.0, spec.sample_zones);
            for (ZoneId zp = 1; zp <= Z; ++zp) {
                for (MarkId mp = 1; mp <= M; ++mp) {
                    for (ZoneId z = 1; z <= Z; ++z) eta.index.push_back({zp, mp, z});
                }
            }
            add(std::move(eta));
        }
        const auto& st = spec.structure;
        switch (spec.family) {
            case Family::SBeta:
            case Family::VBeta: {
                add_vector("alpha", Transform::Identity, 1, [](int) { return std::array<int, 3>{0, 0, 0}; });
                if (spec.family == Family::SBeta) {
                    add_vector("beta", Transform::Log, 1, [](int) { return std::array<int, 3>{0, 0, 0}; });
                } else {
                    add_vector("beta", Transform::Log, M, [](int i) { return std::array<int, 3>{i + 1, 0, 0}; });
                }
                ParamBlock delta = make_block("delta", Transform::Simplex, {M}, 1.0, true);
                for (int m = 1; m <= M; ++m) delta.index.push_back({m, 0, 0});
                add(std::move(delta));
                ParamBlock gamma = make_block("gamma", Transform::Simplex, std::vector<int>(static_cast<std::size_t>(M), M), 1.0, true);
                for (int s = 1; s <= M; ++s) {
                    for (int t = 1; t <= M; ++t) gamma.index.push_back({s, t, 0});
                }
                add(std::move(gamma));
                break;
            }
            case Family::MBeta:
            case Family::MBetaA: {
                auto triple_index = [&st](int k) {
                    const auto& t = st.triples[static_cast<std::size_t>(k)];
                    return std::array<int, 3>{t.zone, t.source, t.target};
                };
                add_vector("alpha", Transform::Identity, 1, [](int) { return std::array<int, 3>{0, 0, 0}; });
                add_vector("beta", Transform::Log, static_cast<int>(st.size()), triple_index);
                if (spec.tie_home_away) {
                    ParamBlock d1 = make_block("delta_z1", Transform::Simplex, {M}, 1.0, true);
                    for (int m = 1; m <= M; ++m) d1.index.push_back({m, 0, 0});
                    add(std::move(d1));
                    ParamBlock d2 = make_block("delta_z2", Transform::Simplex, {M / 2}, 0.5, true);
                    for (int m = 1; m <= M / 2; ++m) d2.index.push_back({m, 0, 0});
                    add(std::move(d2));
                } else {
                    ParamBlock delta = make_block("delta", Transform::Simplex, std::vector<int>(static_cast<std::size_t>(Z), M), 1.0, true);
                    for (int z = 1; z <= Z; ++z) {
                        for (int m = 1; m <= M; ++m) delta.index.push_back({z, m, 0});
                    }
                    add(std::move(delta));
                }
                if (spec.family == Family::MBeta) {
                    // Triples are ordered by (zone, source, target), so rows are contiguous.
                    ParamBlock gamma = make_block("gamma", Transform::Simplex, {}, 1.0, true);
                    for (const auto& row : st.rows) {
                        if (row.empty()) continue;
                        gamma.row_sizes.push_back(static_cast<int>(row.size()));
                        for (const auto& e : row) gamma.index.push_back(triple_index(e.triple));
                    }
                    if (!gamma.row_sizes.empty()) add(std::move(gamma));
                } else {
                    add_vector("phi", Transform::Identity, static_cast<int>(spec.phi_triples.size()),
                               [&](int i) { return triple_index(spec.phi_triples[static_cast<std::size_t>(i)]); });
                    add_vector("omega", Transform::Identity, static_cast<int>(spec.omega_free.size()), [&](int i) {
                        const auto& [c, m] = spec.omega_free[static_cast<std::size_t>(i)];
                        return std::array<int, 3>{c, m, 0};
                    });
                }
                break;
            }
            case Family::Fomc: {
                ParamBlock theta = make_block("theta", Transform::Simplex, std::vector<int>(static_cast<std::size_t>(Z * M), M), 1.0, false);
                for (int z = 1; z <= Z; ++z) {
                    for (int mp = 1; mp <= M; ++mp) {
                        for (int m = 1; m <= M; ++m) theta.index.push_back({z, mp, m});
                    }
                }
                add(std::move(theta));
                break;
            }
            case Family::Msthp: {
                ParamBlock rho = make_block("rho", Transform::Log, {M * Z}, 1.0, false);
                for (int m = 1; m <= M; ++m) {
                    for (int z = 1; z <= Z; ++z) rho.index.push_back({m, z, 0});
                }
                add(std::move(rho));
                break;
            }
        }
    }

    [[nodiscard]] const std::vector<ParamBlock>& blocks() const noexcept { return blocks_; }
    [[nodiscard]] std::size_t x_dim() const noexcept { return x_dim_; }
    [[nodiscard]] std::size_t u_dim() const noexcept { return u_dim_; }

    [[nodiscard]] const ParamBlock* find(std::string_view name) const {
        for (const auto& b : blocks_) {
            if (b.name == name) return &b;
        }
        return nullptr;
    }
    [[nodiscard]] std::span<const double> view(std::span<const double> x, std::string_view name) const {
        const auto* b = find(name);
        if (!b) return {};
        return x.subspan(b->x_offset, b->x_size());
    }
    [[nodiscard]] std::span<double> view(std::span<double> x, std::string_view name) const {
        const auto* b = find(name);
        if (!b) return {};
        return x.subspan(b->x_offset, b->x_size());
    }

    [[nodiscard]] std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(x_dim_);
        for (const auto& b : blocks_) {
            for (std::size_t i = 0; i < b.x_size(); ++i) out.push_back(b.label(i));
        }
        return out;
    }

    /// Writes the sampled blocks of x from u; returns log |J|.
    double constrain(std::span<const double> u, std::span<double> x) const {
        double log_jac = 0.0;
        for (const auto& b : blocks_) {
            if (!b.sampled) continue;
            auto xb = x.subspan(b.x_offset, b.x_size());
            auto ub = u.subspan(b.u_offset, b.u_size());
            switch (b.transform) {
                case Transform::Identity:
                    std::copy(ub.begin(), ub.end(), xb.begin());
                    break;
                case Transform::Log:
                    for (std::size_t i = 0; i < xb.size(); ++i) {
                        xb[i] = std::exp(ub[i]);
                        log_jac += ub[i];
                    }
                    break;
                case Transform::Simplex: {
                    std::size_t xo = 0, uo = 0;
                    for (int r : b.row_sizes) {
                        const auto K = static_cast<std::size_t>(r);
                        log_jac += transforms::simplex_constrain(ub.subspan(uo, K - 1), xb.subspan(xo, K), b.scale);
                        xo += K;
                        uo += K - 1;
                    }
                    break;
                }
            }
        }
        return log_jac;
    }

    [[nodiscard]] std::vector<double> unconstrain(std::span<const double> x) const {
        std::vector<double> u(u_dim_);
        for (const auto& b : blocks_) {
            if (!b.sampled) continue;
            auto xb = x.subspan(b.x_offset, b.x_size());
            auto ub = std::span<double>(u).subspan(b.u_offset, b.u_size());
            switch (b.transform) {
                case Transform::Identity: std::copy(xb.begin(), xb.end(), ub.begin()); break;
                case Transform::Log:
                    for (std::size_t i = 0; i < xb.size(); ++i) ub[i] = std::log(xb[i]);
                    break;
                case Transform::Simplex: {
                    std::size_t xo = 0, uo = 0;
                    for (int r : b.row_sizes) {
                        const auto K = static_cast<std::size_t>(r);
                        transforms::simplex_unconstrain(xb.subspan(xo, K), ub.subspan(uo, K - 1), b.scale);
                        xo += K;
                        uo += K - 1;
                    }
                    break;
                }
            }
        }
        return u;
    }

    /// gu = d(f + log|J|)/du from gx = df/dx (log|J| omitted when with_jacobian is false).
    void backprop(std::span<const double> u, std::span<const double> x, std::span<const double> gx, std::span<double> gu,
                  bool with_jacobian = true) const {
        std::fill(gu.begin(), gu.end(), 0.0);
        for (const auto& b : blocks_) {
            if (!b.sampled) continue;
            auto xb = x.subspan(b.x_offset, b.x_size());
            auto gxb = gx.subspan(b.x_offset, b.x_size());
            auto ub = u.subspan(b.u_offset, b.u_size());
            auto gub = gu.subspan(b.u_offset, b.u_size());
            switch (b.transform) {
                case Transform::Identity: std::copy(gxb.begin(), gxb.end(), gub.begin()); break;
                case Transform::Log:
                    for (std::size_t i = 0; i < xb.size(); ++i) gub[i] = gxb[i] * xb[i] + (with_jacobian ? 1.0 : 0.0);
                    break;
                case Transform::Simplex: {
                    std::size_t xo = 0, uo = 0;
                    for (int r : b.row_sizes) {
                        const auto K = static_cast<std::size_t>(r);
                        transforms::simplex_backprop(ub.subspan(uo, K - 1), gxb.subspan(xo, K), gub.subspan(uo, K - 1), b.scale,
                                                     with_jacobian);
                        xo += K;
                        uo += K - 1;
                    }
                    break;
                }
            }
        }
    }

private:
    template <class IndexFn>
    void add_vector(std::string name, Transform t, int n, IndexFn idx) {
        ParamBlock b = make_block(std::move(name), t, {n}, 1.0, true);
        for (int i = 0; i < n; ++i) b.index.push_back(idx(i));
        add(std::move(b));
    }
    void add(ParamBlock b) {
        b.x_offset = x_dim_;
        b.u_offset = u_dim_;
        x_dim_ += b.x_size();
        u_dim_ += b.u_size();
        blocks_.push_back(std::move(b));
    }

    std::vector<ParamBlock> blocks_;
    std::size_t x_dim_{0};
    std::size_t u_dim_{0};
};

/// A full parameter set for one posterior draw.
struct ModelParams {
    TimeParams time;
    ZoneParams zones;
    MarkModel marks;
};

/// Mark model skeleton (dimensions, structure) with zero-sized parameter arrays.
[[nodiscard]] inline MarkModel mark_model_skeleton(const ModelSpec& spec) {
    MarkModel mm;
    mm.family = spec.family;
    mm.num_marks = spec.num_marks;
    mm.num_zones = spec.num_zones;
    mm.num_teams = spec.num_teams;
    mm.reference_team = spec.reference_team;
    mm.structure = spec.structure;
    const auto M = static_cast<std::size_t>(spec.num_marks), Z = static_cast<std::size_t>(spec.num_zones);
    const std::size_t K = spec.structure.size();
    switch (spec.family) {
        case Family::SBeta:
        case Family::VBeta:
            mm.exc.beta.assign(spec.family == Family::SBeta ? 1 : M, 0.0);
            mm.exc.delta.assign(M, 0.0);
            mm.exc.gamma.assign(M * M, 0.0);
            break;
        case Family::MBeta:
        case Family::MBetaA:
            mm.exc.beta.assign(K, 0.0);
            mm.exc.delta.assign(Z * M, 0.0);
            if (spec.family == Family::MBeta) {
                mm.exc.gamma.assign(K, 0.0);
            } else {
                mm.exc.phi.assign(K, 0.0);
                mm.exc.omega.assign(static_cast<std::size_t>(spec.num_teams) * M, 0.0);
            }
            break;
        case Family::Fomc:
            mm.fomc = FomcParams{spec.num_zones, spec.num_marks, std::vector<double>(Z * M * M, 0.0)};
            break;
        case Family::Msthp:
            mm.msthp = MsthpParams{spec.num_zones, spec.num_marks, std::vector<double>(M * Z, 0.0)};
            break;
    }
    return mm;
}

[[nodiscard]] inline ModelParams unflatten(const ModelSpec& spec, const ParamCodec& codec, std::span<const double> x) {
    ModelParams p;
    p.marks = mark_model_skeleton(spec);
    auto copy = [&](std::string_view name, std::vector<double>& dst) {
        auto v = codec.view(x, name);
        dst.assign(v.begin(), v.end());
    };
    if (spec.has_time_block()) {
        copy("a", p.time.shape);
        copy("b", p.time.rate);
    }
    if (spec.has_zone_block()) {
        p.zones = ZoneParams(spec.num_zones, spec.num_marks);
        copy("eta", p.zones.values);
    }
    auto& exc = p.marks.exc;
    switch (spec.family) {
        case Family::SBeta:
        case Family::VBeta:
            exc.alpha = codec.view(x, "alpha")[0];
            copy("beta", exc.beta);
            copy("delta", exc.delta);
            copy("gamma", exc.gamma);
            break;
        case Family::MBeta:
        case Family::MBetaA: {
            exc.alpha = codec.view(x, "alpha")[0];
            copy("beta", exc.beta);
            if (spec.tie_home_away) {
                auto d1 = codec.view(x, "delta_z1"), d2 = codec.view(x, "delta_z2");
                TiedBackground tb{spec.num_marks, {d1.begin(), d1.end()}, {d2.begin(), d2.end()}};
                exc.delta = tb.expand();
            } else {
                copy("delta", exc.delta);
            }
            if (spec.family == Family::MBeta) {
                if (codec.find("gamma")) copy("gamma", exc.gamma);
            } else {
                auto phi = codec.view(x, "phi");
                for (std::size_t i = 0; i < spec.phi_triples.size(); ++i) exc.phi[static_cast<std::size_t>(spec.phi_triples[i])] = phi[i];
                auto omega = codec.view(x, "omega");
                for (std::size_t i = 0; i < spec.omega_free.size(); ++i) {
                    p.marks.omega_at(spec.omega_free[i].first, spec.omega_free[i].second) = omega[i];
                }
            }
            break;
        }
        case Family::Fomc: copy("theta", p.marks.fomc.theta); break;
        case Family::Msthp: copy("rho", p.marks.msthp.rho); break;
    }
    return p;
}

/// Inverse of unflatten. Tied backgrounds are read from the zone-1 row and
/// the shared half of the zone-2 row.
[[nodiscard]] inline std::vector<double> flatten(const ModelSpec& spec, const ParamCodec& codec, const ModelParams& p) {
    std::vector<double> x(codec.x_dim(), 0.0);
    auto put = [&](std::string_view name, std::span<const double> src) {
        auto v = codec.view(std::span<double>(x), name);
        if (v.size() != src.size()) throw std::invalid_argument("parameter block '" + std::string(name) + "' has the wrong size");
        std::copy(src.begin(), src.end(), v.begin());
    };
    if (spec.has_time_block()) {
        put("a", p.time.shape);
        put("b", p.time.rate);
    }
    if (spec.has_zone_block()) put("eta", p.zones.values);
    const auto& exc = p.marks.exc;
    switch (spec.family) {
        case Family::SBeta:
        case Family::VBeta:
            put("alpha", std::span<const double>(&exc.alpha, 1));
            put("beta", exc.beta);
            put("delta", exc.delta);
            put("gamma", exc.gamma);
            break;
        case Family::MBeta:
        case Family::MBetaA: {
            put("alpha", std::span<const double>(&exc.alpha, 1));
            put("beta", exc.beta);
            if (spec.tie_home_away) {
                const auto M = static_cast<std::size_t>(spec.num_marks);
                put("delta_z1", std::span<const double>(exc.delta).first(M));
                put("delta_z2", std::span<const double>(exc.delta).subspan(M, M / 2));
            } else {
                put("delta", exc.delta);
            }
            if (spec.family == Family::MBeta) {
                if (codec.find("gamma")) put("gamma", exc.gamma);
            } else {
                std::vector<double> phi, omega;
                for (int k : spec.phi_triples) phi.push_back(exc.phi[static_cast<std::size_t>(k)]);
                for (const auto& [c, m] : spec.omega_free) omega.push_back(p.marks.omega_at(c, m));
                put("phi", phi);
                put("omega", omega);
            }
            break;
        }
        case Family::Fomc: put("theta", p.marks.fomc.theta); break;
        case Family::Msthp: put("rho", p.marks.msthp.rho); break;
    }
    return x;
}

}  // namespace flexpoint
