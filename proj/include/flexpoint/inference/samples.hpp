#pragma once

// Posterior draws for a full model: HMC for the sampled blocks, closed-form
// draws for the conjugate ones, plus text serialisation and summaries.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "flexpoint/core/math.hpp"
#include "flexpoint/core/random.hpp"
#include "flexpoint/inference/conjugate.hpp"
#include "flexpoint/inference/convergence.hpp"
#include "flexpoint/inference/hmc.hpp"
#include "flexpoint/inference/posterior.hpp"

namespace flexpoint {

struct ChainStats {
    double step_size{0.0};
    double mean_accept{0.0};
    int divergences{0};
    long long leapfrog_steps{0};
};

struct PosteriorSamples {
    std::vector<std::string> names;
    int warmup{0};
    std::uint64_t seed{0};
    std::vector<std::vector<std::vector<double>>> draws;  // [chain][iteration][param], constrained
    std::vector<ChainStats> stats;

    [[nodiscard]] int chains() const noexcept { return static_cast<int>(draws.size()); }
    [[nodiscard]] int iters() const noexcept { return draws.empty() ? 0 : static_cast<int>(draws.front().size()); }
    [[nodiscard]] std::size_t num_draws() const noexcept {
        std::size_t n = 0;
        for (const auto& c : draws) n += c.size();
        return n;
    }
    [[nodiscard]] std::size_t num_params() const noexcept { return names.size(); }

    [[nodiscard]] std::ptrdiff_t index_of(std::string_view name) const {
        auto it = std::find(names.begin(), names.end(), name);
        return it == names.end() ? -1 : it - names.begin();
    }
    [[nodiscard]] ChainDraws param(std::size_t j) const {
        ChainDraws out;
        for (const auto& c : draws) {
            std::vector<double> v;
            v.reserve(c.size());
            for (const auto& d : c) v.push_back(d[j]);
            out.push_back(std::move(v));
        }
        return out;
    }
    [[nodiscard]] std::vector<double> pooled(std::size_t j) const {
        std::vector<double> v;
        for (const auto& c : draws) {
            for (const auto& d : c) v.push_back(d[j]);
        }
        return v;
    }
    /// r-th draw in chain-major order.
    [[nodiscard]] const std::vector<double>& draw(std::size_t r) const {
        for (const auto& c : draws) {
            if (r < c.size()) return c[r];
            r -= c.size();
        }
        throw std::out_of_range("draw index out of range");
    }
    [[nodiscard]] std::vector<double> posterior_mean() const {
        std::vector<double> m(names.size(), 0.0);
        const double n = static_cast<double>(num_draws());
        for (const auto& c : draws) {
            for (const auto& d : c) {
                for (std::size_t j = 0; j < m.size(); ++j) m[j] += d[j] / n;
            }
        }
        return m;
    }
    [[nodiscard]] int total_divergences() const {
        int n = 0;
        for (const auto& s : stats) n += s.divergences;
        return n;
    }
};

/// Samples the posterior: HMC over the sampled blocks and, per retained draw,
/// closed-form draws for the conjugate blocks (seeded by chain and iteration).
[[nodiscard]] inline PosteriorSamples fit(const Posterior& post, const HmcConfig& cfg) {
    const ModelSpec& spec = post.spec();
    const ParamCodec& codec = post.codec();
    const LogDensityFn f = [&post](std::span<const double> u, std::span<double> g) { return post.log_density(u, g); };
    const auto chains = run_hmc(f, post.dim(), cfg);

    const Dataset& ds = post.data();
    const bool zones_closed = spec.has_zone_block() && !spec.sample_zones;
    const ZoneCounts y = zone_transition_counts(ds);
    const ZonePosterior zpost = zone_posterior(y, spec.priors.zone_conc);
    const FomcPosterior fpost = spec.family == Family::Fomc ? fomc_posterior(ds, spec.priors.fomc_conc) : FomcPosterior{};
    const MsthpPosterior mpost =
        spec.family == Family::Msthp ? msthp_posterior(ds, spec.priors.msthp_shape, spec.priors.msthp_rate) : MsthpPosterior{};

    PosteriorSamples out;
    out.names = codec.names();
    out.warmup = cfg.warmup;
    out.seed = cfg.seed;
    for (std::size_t c = 0; c < chains.size(); ++c) {
        const auto& ch = chains[c];
        out.stats.push_back({ch.step_size, ch.mean_accept, ch.divergences, ch.leapfrog_steps});
        std::vector<std::vector<double>> rows;
        rows.reserve(ch.draws.size());
        for (std::size_t i = 0; i < ch.draws.size(); ++i) {
            std::vector<double> x = post.constrain(ch.draws[i]);
            Rng rng = make_rng(cfg.seed, {0xC0u, c, i});
            if (zones_closed) {
                const auto eta = sample_zone_params(zpost, y, rng);
                auto v = codec.view(std::span<double>(x), "eta");
                std::copy(eta.values.begin(), eta.values.end(), v.begin());
            }
            if (spec.family == Family::Fomc) {
                const auto theta = sample_fomc(fpost, rng);
                auto v = codec.view(std::span<double>(x), "theta");
                std::copy(theta.begin(), theta.end(), v.begin());
            }
            if (spec.family == Family::Msthp) {
                const auto rho = sample_msthp(mpost, rng);
                auto v = codec.view(std::span<double>(x), "rho");
                std::copy(rho.begin(), rho.end(), v.begin());
            }
            rows.push_back(std::move(x));
        }
        out.draws.push_back(std::move(rows));
    }
    return out;
}

struct ParamSummary {
    std::string name;
    double mean{0.0};
    double sd{0.0};
    double rhat{0.0};
    double neff{0.0};
};

[[nodiscard]] inline std::vector<ParamSummary> summarize(const PosteriorSamples& s) {
    std::vector<ParamSummary> out;
    for (std::size_t j = 0; j < s.num_params(); ++j) {
        const auto pooled = s.pooled(j);
        const auto chains = s.param(j);
        ParamSummary ps{s.names[j], mean(pooled), std::sqrt(variance(pooled)), std::numeric_limits<double>::quiet_NaN(),
                        std::numeric_limits<double>::quiet_NaN()};
        if (s.iters() >= 4) {
            ps.rhat = rhat(chains);
            ps.neff = ess(chains);
        }
        out.push_back(ps);
    }
    return out;
}

inline void write_summary(std::ostream& os, const std::vector<ParamSummary>& rows) {
    os << "parameter,mean,sd,rhat,neff\n";
    for (const auto& r : rows) {
        os << (r.name.find(',') == std::string::npos ? r.name : '"' + r.name + '"') << ',' << detail::format_double(r.mean) << ',' << detail::format_double(r.sd) << ','
           << detail::format_double(r.rhat) << ',' << detail::format_double(r.neff) << '\n';
    }
}

/// Long format, 1-based chain and iteration; names containing commas are quoted.
inline void write_samples(std::ostream& os, const PosteriorSamples& s) {
    std::vector<std::string> quoted;
    for (const auto& n : s.names) quoted.push_back(n.find(',') == std::string::npos ? n : '"' + n + '"');
    os << "chain,iter,param,value\n";
    for (std::size_t c = 0; c < s.draws.size(); ++c) {
        for (std::size_t i = 0; i < s.draws[c].size(); ++i) {
            for (std::size_t j = 0; j < s.names.size(); ++j) {
                os << c + 1 << ',' << i + 1 << ',' << quoted[j] << ',' << detail::format_double(s.draws[c][i][j]) << '\n';
            }
        }
    }
}

[[nodiscard]] inline PosteriorSamples read_samples(std::string_view text) {
    PosteriorSamples s;
    std::istringstream in{std::string(text)};
    std::string raw;
    std::size_t line_no = 0;
    bool header = false;
    std::map<std::string, std::size_t> index;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = detail::trim(raw);
        if (line.empty() || line.front() == '#') continue;
        if (!header) {
            if (line != "chain,iter,param,value") throw ParseError(line_no, "bad samples header");
            header = true;
            continue;
        }
        const auto f = detail::split_csv_line(line);
        if (f.size() != 4) throw ParseError(line_no, "expected 4 fields");
        const auto c = static_cast<std::size_t>(detail::parse_int(f[0], line_no, "chain") - 1);
        const auto i = static_cast<std::size_t>(detail::parse_int(f[1], line_no, "iter") - 1);
        auto [it, inserted] = index.emplace(f[2], s.names.size());
        if (inserted) s.names.push_back(f[2]);
        if (s.draws.size() <= c) s.draws.resize(c + 1);
        if (s.draws[c].size() <= i) s.draws[c].resize(i + 1);
        auto& row = s.draws[c][i];
        if (row.size() <= it->second) row.resize(it->second + 1, std::numeric_limits<double>::quiet_NaN());
        row[it->second] = detail::parse_double(f[3], line_no, "value");
    }
    for (auto& c : s.draws) {
        for (auto& d : c) {
            if (d.size() != s.names.size()) throw ParseError(line_no, "incomplete draw in samples file");
        }
    }
    return s;
}

/// One constrained parameter vector as `param,index1,index2,index3,value`.
inline void write_param_table(std::ostream& os, const ParamCodec& codec, std::span<const double> x) {
    os << "param,index1,index2,index3,value\n";
    for (const auto& b : codec.blocks()) {
        for (std::size_t i = 0; i < b.x_size(); ++i) {
            os << b.name;
            for (int ix : b.index[i]) {
                os << ',';
                if (ix != 0) os << ix;
            }
            os << ',' << detail::format_double(x[b.x_offset + i]) << '\n';
        }
    }
}

[[nodiscard]] inline std::vector<double> read_param_table(std::string_view text, const ParamCodec& codec) {
    std::map<std::string, std::size_t> where;
    for (const auto& b : codec.blocks()) {
        for (std::size_t i = 0; i < b.x_size(); ++i) where.emplace(b.label(i), b.x_offset + i);
    }
    std::vector<double> x(codec.x_dim(), std::numeric_limits<double>::quiet_NaN());
    std::istringstream in{std::string(text)};
    std::string raw;
    std::size_t line_no = 0;
    bool header = false;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = detail::trim(raw);
        if (line.empty() || line.front() == '#') continue;
        if (!header) {
            if (line != "param,index1,index2,index3,value") throw ParseError(line_no, "bad parameter table header");
            header = true;
            continue;
        }
        const auto f = detail::split_csv_line(line);
        if (f.size() != 5) throw ParseError(line_no, "expected 5 fields");
        std::string label = f[0];
        if (!f[1].empty()) {
            label += '[' + f[1];
            if (!f[2].empty()) label += ',' + f[2];
            if (!f[3].empty()) label += ',' + f[3];
            label += ']';
        }
        auto it = where.find(label);
        if (it == where.end()) throw ParseError(line_no, "unknown parameter " + label);
        x[it->second] = detail::parse_double(f[4], line_no, "value");
    }
    for (std::size_t j = 0; j < x.size(); ++j) {
        if (std::isnan(x[j])) throw ParseError(line_no, "parameter table is missing entries");
    }
    return x;
}

}  // namespace flexpoint
