#pragma once

// Out-of-sample log point-wise predictive density and model ranking.

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "flexpoint/core/math.hpp"
#include "flexpoint/inference/model.hpp"
#include "flexpoint/inference/samples.hpp"

namespace flexpoint {

struct EventLpd {
    std::string period;  // "game/period"
    std::size_t index{0};
    MarkId mark{0};
    double value{0.0};
};

struct LpdReport {
    std::string model;
    std::string abbreviation;
    std::size_t num_params{0};
    std::size_t draws{0};
    double total{0.0};
    std::vector<EventLpd> events;
    std::vector<std::string> flags;  // events with a zero-likelihood draw
};

/// Count of free parameter values: K-1 per simplex row, one per other entry.
[[nodiscard]] inline std::size_t free_parameter_count(const ParamCodec& codec) {
    std::size_t n = 0;
    for (const auto& b : codec.blocks()) {
        if (b.transform != Transform::Simplex) {
            n += b.x_size();
            continue;
        }
        for (int r : b.row_sizes) n += static_cast<std::size_t>(r - 1);
    }
    return n;
}

/// Log-likelihood of every modelled event of `test` (period order) under one
/// parameter draw: time, zone and mark terms, or the Poisson term for MSTHP.
[[nodiscard]] inline std::vector<double> event_log_likelihoods(const ModelSpec& spec, const ModelParams& p, const Dataset& test) {
    std::vector<double> out;
    out.reserve(test.num_modelled_events());
    const double rho_total = spec.family == Family::Msthp ? p.marks.msthp.total() : 0.0;
    for (const auto& period : test.periods) {
        MarkState state(p.marks, {period.home_team, period.away_team});
        for (std::size_t i = 0; i < period.events.size(); ++i) {
            const Event& e = period.events[i];
            if (i > 0) {
                const Event& prev = period.events[i - 1];
                const double dt = e.t - prev.t;
                double ll = 0.0;
                if (spec.family == Family::Msthp) {
                    const double rho = p.marks.msthp.at(e.mark, e.zone);
                    ll = (rho > 0.0 ? std::log(rho) : kNegInf) - rho_total * dt;
                } else {
                    ll = time_log_density(dt, prev.mark, p.time);
                    const double eta = p.zones.at(p.zones.state(prev.zone, prev.mark), e.zone);
                    ll += eta > 0.0 ? std::log(eta) : kNegInf;
                    ll += state.log_pmf(e.t, e.zone, e.mark).value;
                }
                out.push_back(ll);
            }
            state.push(e);
        }
    }
    return out;
}

/// lpd from explicit parameter draws.
[[nodiscard]] inline LpdReport lpd(const Dataset& test, const ModelSpec& spec, const std::vector<ModelParams>& draws,
                                   std::string model = {}) {
    if (draws.empty()) throw std::invalid_argument("lpd needs at least one posterior draw");
    const std::size_t n = test.num_modelled_events();
    std::vector<std::vector<double>> per_event(n, std::vector<double>(draws.size()));
    for (std::size_t r = 0; r < draws.size(); ++r) {
        const auto ll = event_log_likelihoods(spec, draws[r], test);
        for (std::size_t i = 0; i < n; ++i) per_event[i][r] = ll[i];
    }
    const ParamCodec codec(spec);
    LpdReport rep;
    rep.model = model.empty() ? std::string(family_description(spec.family)) : std::move(model);
    rep.abbreviation = std::string(family_abbreviation(spec.family));
    rep.num_params = free_parameter_count(codec);
    rep.draws = draws.size();
    std::size_t k = 0;
    std::vector<double> contributions;
    for (const auto& period : test.periods) {
        for (std::size_t i = 1; i < period.events.size(); ++i, ++k) {
            const double v = log_mean_exp(per_event[k]);
            const bool any_zero = std::any_of(per_event[k].begin(), per_event[k].end(), [](double x) { return !(x > kNegInf); });
            if (any_zero) {
                rep.flags.push_back(rep.abbreviation + ": period " + period.key() + " event " + std::to_string(i + 1) + " mark " +
                                    test.taxonomy.label(period.events[i].mark) + " has zero likelihood under some draws");
            }
            rep.events.push_back({period.key(), i, period.events[i].mark, v});
            contributions.push_back(v);
        }
    }
    rep.total = pairwise_sum(contributions);
    return rep;
}

[[nodiscard]] inline std::vector<ModelParams> draws_as_params(const ModelSpec& spec, const PosteriorSamples& samples) {
    const ParamCodec codec(spec);
    if (samples.names != codec.names()) throw std::invalid_argument("posterior samples do not match the model");
    std::vector<ModelParams> out;
    out.reserve(samples.num_draws());
    for (const auto& c : samples.draws) {
        for (const auto& d : c) out.push_back(unflatten(spec, codec, d));
    }
    return out;
}

[[nodiscard]] inline LpdReport lpd(const Dataset& test, const ModelSpec& spec, const PosteriorSamples& samples, std::string model = {}) {
    if (samples.num_draws() == 0) throw std::invalid_argument("lpd needs at least one posterior draw");
    return lpd(test, spec, draws_as_params(spec, samples), std::move(model));
}

/// Ranks reports ascending by lpd (best last); ties keep model-name order.
[[nodiscard]] inline std::vector<LpdReport> compare(std::vector<LpdReport> reports) {
    for (std::size_t i = 1; i < reports.size(); ++i) {
        const auto& a = reports[0].events;
        const auto& b = reports[i].events;
        bool same = a.size() == b.size();
        for (std::size_t k = 0; same && k < a.size(); ++k) same = a[k].period == b[k].period && a[k].index == b[k].index;
        if (!same) throw std::invalid_argument("lpd reports were computed on different test sets");
    }
    std::stable_sort(reports.begin(), reports.end(), [](const LpdReport& x, const LpdReport& y) { return x.model < y.model; });
    std::stable_sort(reports.begin(), reports.end(), [](const LpdReport& x, const LpdReport& y) { return x.total < y.total; });
    return reports;
}

inline void write_ranking(std::ostream& os, const std::vector<LpdReport>& ranked) {
    os << "model,abbreviation,d_par,lpd\n";
    for (const auto& r : ranked) {
        os << '"' << r.model << "\"," << r.abbreviation << ',' << r.num_params << ',' << detail::format_double(r.total) << '\n';
    }
}

inline void write_contributions(std::ostream& os, const LpdReport& r) {
    os << "model,period,event,mark,lpd\n";
    for (const auto& e : r.events) {
        os << r.abbreviation << ',' << e.period << ',' << e.index + 1 << ',' << e.mark << ',' << detail::format_double(e.value) << '\n';
    }
}

}  // namespace flexpoint
