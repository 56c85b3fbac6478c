#pragma once

// Forward simulation from posterior draws, interval event-probability
// forecasts, moving-average baselines and ROC AUC.

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <set>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include "flexpoint/core/random.hpp"
#include "flexpoint/inference/model.hpp"

namespace flexpoint {

namespace detail {

// Gamma(a, b) draw conditioned on exceeding c.
inline double sample_gamma_tail(double a, double b, double c, Rng& rng) {
    if (c <= 0.0) return std::gamma_distribution<double>{a, 1.0 / b}(rng);
    const double tail = boost::math::gamma_q(a, b * c);
    if (!(tail > 0.0)) return c + std::exponential_distribution<double>{b}(rng);
    double u = uniform01(rng);
    while (u == 0.0) u = uniform01(rng);
    const double dt = boost::math::gamma_q_inv(a, u * tail) / b;
    return std::max(dt, std::nextafter(c, std::numeric_limits<double>::infinity()));
}

}  // namespace detail

/// Continues a period from its history: events in (start, start + horizon].
/// The first inter-arrival is conditioned on exceeding start - t_last.
/// Stops at the first event whose mark is flagged in `stop_marks`.
class Simulator {
public:
    Simulator(const ModelSpec& spec, const ModelParams& params, TeamContext teams) : spec_(&spec), params_(&params), teams_(teams) {
        if (spec.has_time_block() && !params.time.valid()) throw std::domain_error("degenerate Gamma time parameters");
        if (spec.family == Family::Msthp) {
            for (double r : params.marks.msthp.rho) {
                if (!(r >= 0.0)) throw std::domain_error("negative Poisson rate");
            }
        }
    }

    [[nodiscard]] MarkState state_for(std::span<const Event> history) const {
        MarkState st(params_->marks, teams_);
        for (const auto& e : history) st.push(e);
        return st;
    }

    /// Simulates onto a copy of `state`, which must already hold the history.
    std::vector<Event> run(MarkState state, double start, double horizon, Rng& rng, const std::vector<char>* stop_marks = nullptr) const {
        std::vector<Event> out;
        if (!(horizon > 0.0)) return out;
        const double end = start + horizon;
        const MarkModel& mm = params_->marks;
        if (spec_->family == Family::Msthp) {
            const double total = mm.msthp.total();
            if (!(total > 0.0)) return out;
            double t = start;
            std::exponential_distribution<double> ex(total);
            while (true) {
                t += ex(rng);
                if (t > end) break;
                const auto cell = sample_categorical(mm.msthp.rho, rng);
                const auto mark = static_cast<MarkId>(cell / static_cast<std::size_t>(mm.num_zones) + 1);
                const Event e{t, static_cast<ZoneId>(cell % static_cast<std::size_t>(mm.num_zones) + 1), mark,
                              mark <= mm.num_marks / 2 ? teams_.home : teams_.away};
                out.push_back(e);
                if (stop_marks && (*stop_marks)[static_cast<std::size_t>(e.mark - 1)]) break;
            }
            return out;
        }
        if (state.empty()) throw std::invalid_argument("simulation needs at least one history event");
        Event prev = state.last();
        bool first = true;
        while (true) {
            const auto m = static_cast<std::size_t>(prev.mark - 1);
            const double a = params_->time.shape[m], b = params_->time.rate[m];
            const double dt = first ? detail::sample_gamma_tail(a, b, start - prev.t, rng) : sample_interarrival(prev.mark, params_->time, rng);
            first = false;
            const double t = prev.t + dt;
            if (t > end) break;
            if (!(t > prev.t)) continue;  // underflow guard for tiny inter-arrivals
            const ZoneId z = sample_zone(params_->zones.state(prev.zone, prev.mark), params_->zones, rng);
            const auto pmf = state.pmf(t, z);
            const auto mark = static_cast<MarkId>(sample_categorical(pmf, rng) + 1);
            Event e{t, z, mark, mark <= mm.num_marks / 2 ? teams_.home : teams_.away};
            state.push(e);
            out.push_back(e);
            prev = e;
            if (stop_marks && (*stop_marks)[static_cast<std::size_t>(mark - 1)]) break;
        }
        return out;
    }

private:
    const ModelSpec* spec_;
    const ModelParams* params_;
    TeamContext teams_;
};

[[nodiscard]] inline std::vector<Event> simulate_forward(const ModelSpec& spec, const ModelParams& params, std::span<const Event> history,
                                                         TeamContext teams, double horizon, Rng& rng) {
    Simulator sim(spec, params, teams);
    const double start = history.empty() ? 0.0 : history.back().t;
    return sim.run(sim.state_for(history), start, horizon, rng);
}

/// A whole synthetic period grown from a given opening event.
[[nodiscard]] inline GamePeriod simulate_period(const ModelSpec& spec, const ModelParams& params, std::int64_t game_id, int period,
                                                TeamContext teams, const Event& opening, double t_end, Rng& rng) {
    GamePeriod p;
    p.game_id = game_id;
    p.period = period;
    p.home_team = teams.home;
    p.away_team = teams.away;
    p.t_end = t_end;
    p.events.push_back(opening);
    Simulator sim(spec, params, teams);
    const std::span<const Event> first(&opening, 1);
    auto rest = sim.run(sim.state_for(first), opening.t, t_end - opening.t, rng);
    p.events.insert(p.events.end(), rest.begin(), rest.end());
    return p;
}

struct SimConfig {
    int rollouts{100};        // Q per draw
    double interval{60.0};    // seconds
    double horizon{0.0};      // 0: the period's T_end
    std::uint64_t seed{1};
    int threads{0};
};

struct PredictionSeries {
    std::vector<double> start;
    std::vector<double> p_model;
    std::vector<int> observed;
    std::vector<double> p_baseline;
};

/// Per interval: condition on the real events before its start (the period's
/// first event always included), simulate the interval Q times per draw and
/// report the share of rollouts with at least one target-mark event.
[[nodiscard]] inline PredictionSeries interval_probabilities(const ModelSpec& spec, const std::vector<ModelParams>& draws,
                                                             const GamePeriod& period, const std::set<MarkId>& targets,
                                                             const SimConfig& cfg) {
    if (draws.empty()) throw std::invalid_argument("forecasting needs at least one posterior draw");
    if (cfg.rollouts < 1 || !(cfg.interval > 0.0)) throw std::invalid_argument("invalid simulation configuration");
    if (period.events.empty()) throw std::invalid_argument("forecasting needs a non-empty period");
    const double horizon = cfg.horizon > 0.0 ? cfg.horizon : period.t_end;
    std::vector<char> is_target(static_cast<std::size_t>(spec.num_marks), 0);
    for (MarkId m : targets) {
        if (m < 1 || m > spec.num_marks) throw std::invalid_argument("target mark out of range");
        is_target[static_cast<std::size_t>(m - 1)] = 1;
    }
    PredictionSeries out;
    const TeamContext teams{period.home_team, period.away_team};
    for (std::size_t k = 0;; ++k) {
        const double s = static_cast<double>(k) * cfg.interval;
        if (s >= horizon) break;
        const double len = std::min(cfg.interval, horizon - s);
        std::size_t n_hist = 1;
        while (n_hist < period.events.size() && period.events[n_hist].t < s) ++n_hist;
        const auto history = std::span<const Event>(period.events).first(n_hist);
        const double start = std::max(s, history.back().t);
        int obs = 0;
        for (const auto& e : period.events) {
            if (e.t >= s && e.t < s + cfg.interval && is_target[static_cast<std::size_t>(e.mark - 1)]) obs = 1;
        }

        std::vector<long long> hits(draws.size(), 0);
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t r = next++; r < draws.size(); r = next++) {
                Simulator sim(spec, draws[r], teams);
                const MarkState base = sim.state_for(history);
                for (int q = 0; q < cfg.rollouts; ++q) {
                    Rng rng = make_rng(cfg.seed, {k, r, static_cast<std::uint64_t>(q)});
                    const auto ev = sim.run(base, start, s + len - start, rng, &is_target);
                    if (!ev.empty() && is_target[static_cast<std::size_t>(ev.back().mark - 1)]) ++hits[r];
                }
            }
        };
        int threads = cfg.threads > 0 ? cfg.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
        threads = std::min<int>(threads, static_cast<int>(draws.size()));
        if (threads <= 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
            for (auto& t : pool) t.join();
        }
        long long total = 0;
        for (auto h : hits) total += h;
        out.start.push_back(s);
        out.p_model.push_back(static_cast<double>(total) / (static_cast<double>(draws.size()) * cfg.rollouts));
        out.observed.push_back(obs);
    }
    return out;
}

/// p[i] = mean of the previous min(k, i) indicators; p[0] = prior_mean.
[[nodiscard]] inline std::vector<double> moving_average_baseline(std::span<const int> o, int k, double prior_mean) {
    if (k < 1) throw std::invalid_argument("moving-average window must be >= 1");
    std::vector<double> p(o.size());
    for (std::size_t i = 0; i < o.size(); ++i) {
        if (i == 0) {
            p[i] = prior_mean;
            continue;
        }
        const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(k), i);
        double s = 0.0;
        for (std::size_t j = i - w; j < i; ++j) s += o[j];
        p[i] = s / static_cast<double>(w);
    }
    return p;
}

/// Mann-Whitney AUC with half credit for ties.
[[nodiscard]] inline double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("scores and labels differ in length");
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<double> rank(scores.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    double n_pos = 0.0, n_neg = 0.0, rank_sum = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i]) {
            n_pos += 1.0;
            rank_sum += rank[i];
        } else {
            n_neg += 1.0;
        }
    }
    if (n_pos == 0.0 || n_neg == 0.0) throw std::invalid_argument("AUC needs both positive and negative labels");
    return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

inline void write_prediction_series(std::ostream& os, const PredictionSeries& s) {
    os << "interval,start_s,p_model,p_ma,observed\n";
    for (std::size_t i = 0; i < s.start.size(); ++i) {
        os << i + 1 << ',' << detail::format_double(s.start[i]) << ',' << detail::format_double(s.p_model[i]) << ','
           << (i < s.p_baseline.size() ? detail::format_double(s.p_baseline[i]) : std::string("nan")) << ',' << s.observed[i] << '\n';
    }
}

}  // namespace flexpoint
