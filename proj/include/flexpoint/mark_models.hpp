#pragma once

// Conditional mark distributions.
//
//   S-beta / V-beta:   f(m) = (delta_m + w_m) / (1 + E)
//   M-beta / M-betaA:  f(m) = (delta_{m|z} + w_m) / sum_m' (delta_{m'|z} + w_m')
//
// with w_m = sum_j exp(alpha - beta_eff (t - t_j)) gamma_eff(m_j -> m) and E the
// same sum without gamma. The matrix families only look at the W most recent
// events and at retained (source -> target | zone) triples. FOMC and MSTHP are
// the non-exciting baselines.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "flexpoint/core/math.hpp"
#include "flexpoint/event_core.hpp"
#include "flexpoint/screening.hpp"

namespace flexpoint {

enum class Family { SBeta, VBeta, MBeta, MBetaA, Fomc, Msthp };

[[nodiscard]] inline std::string_view family_key(Family f) {
    switch (f) {
        case Family::SBeta: return "sbeta";
        case Family::VBeta: return "vbeta";
        case Family::MBeta: return "mbeta";
        case Family::MBetaA: return "mbeta_a";
        case Family::Fomc: return "fomc";
        case Family::Msthp: return "msthp";
    }
    return "?";
}

[[nodiscard]] inline std::string_view family_abbreviation(Family f) {
    switch (f) {
        case Family::SBeta: return "Sβ";
        case Family::VBeta: return "Vβ";
        case Family::MBeta: return "Mβ";
        case Family::MBetaA: return "MβA";
        case Family::Fomc: return "FOMC";
        case Family::Msthp: return "MSTHP";
    }
    return "?";
}

[[nodiscard]] inline std::string_view family_description(Family f) {
    switch (f) {
        case Family::SBeta: return "Scalar β";
        case Family::VBeta: return "Vector β";
        case Family::MBeta: return "Matrix β";
        case Family::MBetaA: return "Matrix β with abilities";
        case Family::Fomc: return "First order Markov chain (Baseline)";
        case Family::Msthp: return "Homogeneous Poisson process (Baseline)";
    }
    return "?";
}

[[nodiscard]] inline Family parse_family(std::string_view key) {
    for (Family f : {Family::SBeta, Family::VBeta, Family::MBeta, Family::MBetaA, Family::Fomc, Family::Msthp}) {
        if (family_key(f) == key) return f;
    }
    throw std::invalid_argument("unknown model family: " + std::string(key));
}

[[nodiscard]] inline bool is_excitation(Family f) noexcept {
    return f == Family::SBeta || f == Family::VBeta || f == Family::MBeta || f == Family::MBetaA;
}
[[nodiscard]] inline bool is_matrix(Family f) noexcept { return f == Family::MBeta || f == Family::MBetaA; }

/// Retained triples grouped into rows keyed by (zone, source mark).
struct ExcitationStructure {
    struct Entry {
        MarkId target;
        int triple;
    };
    struct Triple {
        ZoneId zone;
        MarkId source;
        MarkId target;
    };

    int num_marks{0};
    int num_zones{0};
    int window{0};  // 0: unlimited history
    std::vector<Triple> triples;
    std::vector<std::vector<Entry>> rows;  // [(z-1)*M + (src-1)]
    std::vector<int> baseline;             // per row: triple index of the logit baseline, -1 if empty

    [[nodiscard]] int row_index(ZoneId z, MarkId src) const noexcept { return (z - 1) * num_marks + (src - 1); }
    [[nodiscard]] const std::vector<Entry>& row(ZoneId z, MarkId src) const { return rows[static_cast<std::size_t>(row_index(z, src))]; }
    [[nodiscard]] std::size_t size() const noexcept { return triples.size(); }
    [[nodiscard]] bool is_baseline(int k) const {
        const auto& t = triples[static_cast<std::size_t>(k)];
        return baseline[static_cast<std::size_t>(row_index(t.zone, t.source))] == k;
    }

    /// `mark_frequency[m-1]` ranks fallback baselines when mark M is not retained
    /// in a row; without it the largest retained target is used.
    [[nodiscard]] static ExcitationStructure from_triples(std::vector<Triple> list, int M, int Z, int window,
                                                          const std::vector<double>& mark_frequency = {}) {
        std::sort(list.begin(), list.end(), [](const Triple& a, const Triple& b) {
            return std::tie(a.zone, a.source, a.target) < std::tie(b.zone, b.source, b.target);
        });
        list.erase(std::unique(list.begin(), list.end(),
                               [](const Triple& a, const Triple& b) {
                                   return a.zone == b.zone && a.source == b.source && a.target == b.target;
                               }),
                   list.end());
        ExcitationStructure s;
        s.num_marks = M;
        s.num_zones = Z;
        s.window = window;
        s.rows.assign(static_cast<std::size_t>(M * Z), {});
        s.baseline.assign(static_cast<std::size_t>(M * Z), -1);
        for (const auto& t : list) {
            if (t.zone < 1 || t.zone > Z || t.source < 1 || t.source > M || t.target < 1 || t.target > M) {
                throw std::invalid_argument("excitation triple out of range");
            }
            const int k = static_cast<int>(s.triples.size());
            s.triples.push_back(t);
            s.rows[static_cast<std::size_t>(s.row_index(t.zone, t.source))].push_back({t.target, k});
        }
        for (std::size_t r = 0; r < s.rows.size(); ++r) {
            const auto& row = s.rows[r];
            if (row.empty()) continue;
            auto best = row.back();  // largest target; equals M when M is retained
            if (best.target != M && !mark_frequency.empty()) {
                for (const auto& e : row) {
                    const double fe = mark_frequency[static_cast<std::size_t>(e.target - 1)];
                    const double fb = mark_frequency[static_cast<std::size_t>(best.target - 1)];
                    if (fe > fb || (fe == fb && e.target > best.target)) best = e;
                }
            }
            s.baseline[r] = best.triple;
        }
        return s;
    }

    [[nodiscard]] static ExcitationStructure from_rules(const RuleSet& rules, int M, int Z,
                                                        const std::vector<double>& mark_frequency = {}) {
        std::vector<Triple> list;
        for (const auto& r : rules.rules) list.push_back({r.zone, r.source, r.target});
        return from_triples(std::move(list), M, Z, rules.window, mark_frequency);
    }

    [[nodiscard]] static ExcitationStructure full(int M, int Z, int window) {
        std::vector<Triple> list;
        for (ZoneId z = 1; z <= Z; ++z) {
            for (MarkId s = 1; s <= M; ++s) {
                for (MarkId t = 1; t <= M; ++t) list.push_back({z, s, t});
            }
        }
        return from_triples(std::move(list), M, Z, window);
    }
};

/// Parameters of the exciting families. Layouts:
///   beta:  1 (S), M (V, by source) or one per triple (M, MA)
///   delta: M (S, V) or Z*M by zone (M, MA)
///   gamma: M*M [src][tgt] (S, V) or one per triple (M); unused for MA
///   phi:   one per triple (MA), baseline triples held at 0
///   omega: C*M [(c-1)*M + (m-1)] (MA), reference team row held at 0
struct ExcitationParams {
    double alpha{0.0};
    std::vector<double> beta, delta, gamma, phi, omega;

    [[nodiscard]] ExcitationParams zeros_like() const {
        ExcitationParams z;
        z.beta.assign(beta.size(), 0.0);
        z.delta.assign(delta.size(), 0.0);
        z.gamma.assign(gamma.size(), 0.0);
        z.phi.assign(phi.size(), 0.0);
        z.omega.assign(omega.size(), 0.0);
        return z;
    }
};

/// theta[(z, m_prev) -> m], rows indexed (z-1)*M + (m_prev-1).
struct FomcParams {
    int num_zones{0};
    int num_marks{0};
    std::vector<double> theta;

    [[nodiscard]] std::span<const double> row(ZoneId z, MarkId prev) const {
        return std::span<const double>(theta).subspan(static_cast<std::size_t>(((z - 1) * num_marks + (prev - 1)) * num_marks),
                                                      static_cast<std::size_t>(num_marks));
    }
};

/// rho[(m-1)*Z + (z-1)] in events per second.
struct MsthpParams {
    int num_zones{0};
    int num_marks{0};
    std::vector<double> rho;

    [[nodiscard]] double at(MarkId m, ZoneId z) const { return rho[static_cast<std::size_t>((m - 1) * num_zones + (z - 1))]; }
    [[nodiscard]] double total() const {
        double s = 0.0;
        for (double r : rho) s += r;
        return s;
    }
};

struct TeamContext {
    TeamId home{0};
    TeamId away{0};
};

struct MarkModel {
    Family family{Family::SBeta};
    int num_marks{0};
    int num_zones{kDefaultZones};
    int num_teams{0};
    TeamId reference_team{1};
    ExcitationStructure structure;  // matrix families
    ExcitationParams exc;
    FomcParams fomc;
    MsthpParams msthp;

    [[nodiscard]] TeamId team_for_target(MarkId m, const TeamContext& tc) const {
        return m <= num_marks / 2 ? tc.home : tc.away;
    }
    [[nodiscard]] double& omega_at(TeamId c, MarkId m) { return exc.omega[static_cast<std::size_t>((c - 1) * num_marks + (m - 1))]; }
    [[nodiscard]] double omega_at(TeamId c, MarkId m) const {
        return exc.omega[static_cast<std::size_t>((c - 1) * num_marks + (m - 1))];
    }
    [[nodiscard]] double delta_at(MarkId m, ZoneId z) const {
        return is_matrix(family) ? exc.delta[static_cast<std::size_t>((z - 1) * num_marks + (m - 1))]
                                 : exc.delta[static_cast<std::size_t>(m - 1)];
    }
    [[nodiscard]] double beta_for(MarkId src) const {
        return family == Family::SBeta ? exc.beta[0] : exc.beta[static_cast<std::size_t>(src - 1)];
    }
};

/// Softmax over a row's support with the baseline slot's logit fixed at 0.
[[nodiscard]] inline std::vector<double> conversion_from_logits(std::span<const double> phi, std::span<const double> omega,
                                                                std::size_t baseline_slot) {
    if (phi.empty()) throw std::invalid_argument("conversion support is empty");
    if (omega.size() != phi.size() || baseline_slot >= phi.size()) throw std::invalid_argument("conversion logit sizes disagree");
    std::vector<double> logits(phi.size());
    for (std::size_t i = 0; i < phi.size(); ++i) logits[i] = i == baseline_slot ? 0.0 : phi[i] + omega[i];
    const double lse = log_sum_exp(logits);
    for (double& l : logits) l = std::exp(l - lse);
    return logits;
}

/// Realised gamma per triple for a matrix family; MA depends on the teams.
[[nodiscard]] inline std::vector<double> conversion_table(const MarkModel& model, const TeamContext& tc) {
    if (model.family == Family::MBeta) return model.exc.gamma;
    const auto& st = model.structure;
    std::vector<double> gamma(st.size(), 0.0);
    std::vector<double> phi, omega;
    for (std::size_t r = 0; r < st.rows.size(); ++r) {
        const auto& row = st.rows[r];
        if (row.empty()) continue;
        phi.clear();
        omega.clear();
        std::size_t base_slot = 0;
        for (std::size_t i = 0; i < row.size(); ++i) {
            const int k = row[i].triple;
            if (k == st.baseline[r]) base_slot = i;
            phi.push_back(model.exc.phi[static_cast<std::size_t>(k)]);
            const TeamId c = model.team_for_target(row[i].target, tc);
            if (c < 1 || c > model.num_teams) throw std::invalid_argument("team-ability model needs known home/away teams");
            omega.push_back(model.omega_at(c, row[i].target));
        }
        const auto g = conversion_from_logits(phi, omega, base_slot);
        for (std::size_t i = 0; i < row.size(); ++i) gamma[static_cast<std::size_t>(row[i].triple)] = g[i];
    }
    return gamma;
}

struct ExcitationWeights {
    std::vector<double> w;  // per target mark
    double total{0.0};      // E
};

struct MarkLogProb {
    double value{kNegInf};
    bool zero_mass{true};
};

struct Branching {
    double background{1.0};
    std::vector<double> parents;  // one entry per earlier event of the period
};

/// Streaming filtration for one period (or one simulated rollout). Events are
/// pushed in time order; queries are for a time strictly after the last push.
class MarkState {
public:
    MarkState(const MarkModel& model, TeamContext teams) : model_(&model), teams_(teams) {
        const int M = model.num_marks;
        if (is_matrix(model.family)) {
            gamma_ = conversion_table(model, teams);
        } else if (!is_excitation(model.family)) {
            return;
        } else {
            acc_.assign(static_cast<std::size_t>(M), 0.0);
        }
    }

    void push(const Event& e) {
        if (has_last_ && !(e.t > last_.t)) throw std::domain_error("events must be pushed in strictly increasing time");
        switch (model_->family) {
            case Family::SBeta:
            case Family::VBeta:
                if (has_last_) decay_to(e.t);
                acc_[static_cast<std::size_t>(e.mark - 1)] += 1.0;
                break;
            case Family::MBeta:
            case Family::MBetaA:
                recent_.push_back(e);
                if (model_->structure.window > 0 && recent_.size() > static_cast<std::size_t>(model_->structure.window)) {
                    recent_.erase(recent_.begin());
                }
                break;
            default: break;
        }
        last_ = e;
        has_last_ = true;
    }

    [[nodiscard]] bool empty() const noexcept { return !has_last_; }
    [[nodiscard]] const Event& last() const { return last_; }
    [[nodiscard]] const TeamContext& teams() const noexcept { return teams_; }

    [[nodiscard]] ExcitationWeights weights(double t, ZoneId z) const {
        const MarkModel& mm = *model_;
        const auto M = static_cast<std::size_t>(mm.num_marks);
        ExcitationWeights out{std::vector<double>(M, 0.0), 0.0};
        if (!has_last_ || !is_excitation(mm.family)) return out;
        if (!(t > last_.t)) throw std::domain_error("query time must be after the last event");
        const double ea = std::exp(mm.exc.alpha);
        if (!is_matrix(mm.family)) {
            const double dt = t - last_.t;
            const double shared = mm.family == Family::SBeta ? std::exp(-mm.exc.beta[0] * dt) : 0.0;
            for (std::size_t s = 0; s < M; ++s) {
                if (acc_[s] == 0.0) continue;
                const double decay = mm.family == Family::SBeta ? shared : std::exp(-mm.beta_for(static_cast<MarkId>(s + 1)) * dt);
                const double a = ea * acc_[s] * decay;
                out.total += a;
                const double* g = &mm.exc.gamma[s * M];
                for (std::size_t m = 0; m < M; ++m) out.w[m] += a * g[m];
            }
            return out;
        }
        for (const Event& ev : recent_) {
            const double dt = t - ev.t;
            for (const auto& entry : mm.structure.row(z, ev.mark)) {
                const auto k = static_cast<std::size_t>(entry.triple);
                const double term = ea * std::exp(-mm.exc.beta[k] * dt) * gamma_[k];
                out.w[static_cast<std::size_t>(entry.target - 1)] += term;
                out.total += term;
            }
        }
        return out;
    }

    [[nodiscard]] std::vector<double> pmf(double t, ZoneId z) const {
        const MarkModel& mm = *model_;
        const auto M = static_cast<std::size_t>(mm.num_marks);
        std::vector<double> p(M);
        switch (mm.family) {
            case Family::Fomc: {
                if (!has_last_) throw std::logic_error("first-order chain needs a previous event");
                auto row = mm.fomc.row(z, last_.mark);
                std::copy(row.begin(), row.end(), p.begin());
                return p;
            }
            case Family::Msthp: {
                double s = 0.0;
                for (std::size_t m = 0; m < M; ++m) s += p[m] = mm.msthp.at(static_cast<MarkId>(m + 1), z);
                for (double& v : p) v /= s;
                return p;
            }
            default: break;
        }
        const auto ew = weights(t, z);
        double denom = 0.0;
        for (std::size_t m = 0; m < M; ++m) {
            p[m] = mm.delta_at(static_cast<MarkId>(m + 1), z) + ew.w[m];
            denom += p[m];
        }
        if (!is_matrix(mm.family)) denom = 1.0 + ew.total;
        for (double& v : p) v /= denom;
        return p;
    }

    [[nodiscard]] MarkLogProb log_pmf(double t, ZoneId z, MarkId m) const {
        const double p = pmf(t, z)[static_cast<std::size_t>(m - 1)];
        if (!(p > 0.0)) return {kNegInf, true};
        return {std::log(p), false};
    }

    // Attribution of an event of mark m at (t, z) to the background or to
    // one of the `history` events (which must be the events pushed so far).
    [[nodiscard]] Branching branching(std::span<const Event> history, double t, ZoneId z, MarkId m) const {
        const MarkModel& mm = *model_;
        if (!is_excitation(mm.family)) throw std::invalid_argument("branching needs an exciting family");
        Branching b;
        b.parents.assign(history.size(), 0.0);
        const double ea = std::exp(mm.exc.alpha);
        const auto M = static_cast<std::size_t>(mm.num_marks);
        std::size_t first = 0;
        if (is_matrix(mm.family) && mm.structure.window > 0 && history.size() > static_cast<std::size_t>(mm.structure.window)) {
            first = history.size() - static_cast<std::size_t>(mm.structure.window);
        }
        double total = mm.delta_at(m, z);
        for (std::size_t j = first; j < history.size(); ++j) {
            const Event& ev = history[j];
            const double dt = t - ev.t;
            if (!(dt > 0.0)) throw std::domain_error("branching query must follow its history");
            double term = 0.0;
            if (is_matrix(mm.family)) {
                for (const auto& entry : mm.structure.row(z, ev.mark)) {
                    if (entry.target != m) continue;
                    const auto k = static_cast<std::size_t>(entry.triple);
                    term = ea * std::exp(-mm.exc.beta[k] * dt) * gamma_[k];
                }
            } else {
                term = ea * std::exp(-mm.beta_for(ev.mark) * dt) *
                       mm.exc.gamma[static_cast<std::size_t>(ev.mark - 1) * M + static_cast<std::size_t>(m - 1)];
            }
            b.parents[j] = term;
            total += term;
        }
        b.background = mm.delta_at(m, z) / total;
        for (double& v : b.parents) v /= total;
        return b;
    }

private:
    void decay_to(double t) {
        const double dt = t - last_.t;
        if (model_->family == Family::SBeta) {
            const double d = std::exp(-model_->exc.beta[0] * dt);
            for (double& a : acc_) a *= d;
            return;
        }
        for (std::size_t s = 0; s < acc_.size(); ++s) {
            if (acc_[s] != 0.0) acc_[s] *= std::exp(-model_->beta_for(static_cast<MarkId>(s + 1)) * dt);
        }
    }

    const MarkModel* model_;
    TeamContext teams_;
    std::vector<double> gamma_;   // matrix families: realised conversion per triple
    std::vector<double> acc_;     // S/V: decayed counts per source mark at last_.t
    std::vector<Event> recent_;   // matrix families: last W events
    Event last_{};
    bool has_last_{false};
};

/// Direct (non-streaming) evaluation of the excitation sums for a history.
[[nodiscard]] inline ExcitationWeights excitation_weights(const MarkModel& model, std::span<const Event> history, double t, ZoneId z,
                                                          TeamContext teams = {}) {
    MarkState st(model, teams);
    for (const auto& e : history) st.push(e);
    return st.weights(t, z);
}

[[nodiscard]] inline std::vector<double> mark_pmf(const MarkModel& model, std::span<const Event> history, double t, ZoneId z,
                                                  TeamContext teams = {}) {
    MarkState st(model, teams);
    for (const auto& e : history) st.push(e);
    return st.pmf(t, z);
}

[[nodiscard]] inline MarkLogProb mark_log_pmf(const MarkModel& model, const Event& event, std::span<const Event> history,
                                              TeamContext teams = {}) {
    MarkState st(model, teams);
    for (const auto& e : history) st.push(e);
    return st.log_pmf(event.t, event.zone, event.mark);
}

[[nodiscard]] inline Branching branching_probabilities(const MarkModel& model, const GamePeriod& period, std::size_t index) {
    if (!GamePeriod::is_modelled(index) || index >= period.events.size()) {
        throw std::invalid_argument("branching probabilities need a modelled event index");
    }
    MarkState st(model, {period.home_team, period.away_team});
    for (std::size_t j = 0; j < index; ++j) st.push(period.events[j]);
    const Event& e = period.events[index];
    return st.branching(std::span<const Event>(period.events).first(index), e.t, e.zone, e.mark);
}

/// Poisson kernel sum_{m,z} q log rho - T rho, with 0 log 0 := 0 and no factorials.
[[nodiscard]] inline double msthp_log_lik(std::span<const double> counts, double horizon, const MsthpParams& p) {
    if (!(horizon > 0.0)) throw std::invalid_argument("observation horizon must be positive");
    if (counts.size() != p.rho.size()) throw std::invalid_argument("count table does not match rate table");
    double ll = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] > 0.0) {
            if (!(p.rho[i] > 0.0)) return kNegInf;
            ll += counts[i] * std::log(p.rho[i]);
        }
        ll -= horizon * p.rho[i];
    }
    return ll;
}

/// Log-likelihood of all modelled marks, with gradient accumulation for the
/// exciting families. `grad` must be shaped like `model.exc` (see zeros_like).
inline double mark_log_likelihood(const MarkModel& model, const Dataset& ds, ExcitationParams* grad = nullptr,
                                  std::vector<std::string>* failures = nullptr) {
    const auto M = static_cast<std::size_t>(model.num_marks);
    std::vector<double> per_period;
    per_period.reserve(ds.periods.size());

    auto flag = [&](const GamePeriod& p, std::size_t i) {
        if (failures) failures->push_back("period " + p.key() + " event " + std::to_string(i + 1) + ": zero mark probability");
    };

    if (model.family == Family::Fomc || model.family == Family::Msthp) {
        for (const auto& p : ds.periods) {
            MarkState st(model, {p.home_team, p.away_team});
            double ll = 0.0;
            for (std::size_t i = 0; i < p.events.size(); ++i) {
                if (i > 0) {
                    auto lp = st.log_pmf(p.events[i].t, p.events[i].zone, p.events[i].mark);
                    if (lp.zero_mass) flag(p, i);
                    ll += lp.value;
                }
                st.push(p.events[i]);
            }
            per_period.push_back(ll);
        }
        return pairwise_sum(per_period);
    }

    const double ea = std::exp(model.exc.alpha);

    if (!is_matrix(model.family)) {
        const bool scalar = model.family == Family::SBeta;
        std::vector<double> A(M), B(M), beta(M);
        for (std::size_t s = 0; s < M; ++s) beta[s] = model.beta_for(static_cast<MarkId>(s + 1));
        for (const auto& p : ds.periods) {
            std::fill(A.begin(), A.end(), 0.0);
            std::fill(B.begin(), B.end(), 0.0);
            double ll = 0.0;
            for (std::size_t i = 0; i < p.events.size(); ++i) {
                const Event& e = p.events[i];
                const auto m = static_cast<std::size_t>(e.mark - 1);
                if (i > 0) {
                    const double dt = e.t - p.events[i - 1].t;
                    if (!(dt > 0.0)) throw std::domain_error("non-positive inter-event time in period " + p.key());
                    double w = 0.0, E = 0.0, wb = 0.0, Eb = 0.0;
                    const double shared = scalar ? std::exp(-beta[0] * dt) : 0.0;
                    for (std::size_t s = 0; s < M; ++s) {
                        if (A[s] == 0.0) continue;
                        const double d = scalar ? shared : std::exp(-beta[s] * dt);
                        B[s] = d * (B[s] - dt * A[s]);
                        A[s] *= d;
                        const double g = model.exc.gamma[s * M + m];
                        w += A[s] * g;
                        E += A[s];
                        wb += B[s] * g;
                        Eb += B[s];
                    }
                    w *= ea;
                    E *= ea;
                    const double N = model.exc.delta[m] + w, D = 1.0 + E;
                    if (!(N > 0.0)) {
                        flag(p, i);
                        ll = kNegInf;
                    } else {
                        ll += std::log(N / D);
                    }
                    if (grad && N > 0.0) {
                        grad->delta[m] += 1.0 / N;
                        grad->alpha += w / N - E / D;
                        if (scalar) grad->beta[0] += ea * (wb / N - Eb / D);
                        for (std::size_t s = 0; s < M; ++s) {
                            if (A[s] == 0.0 && B[s] == 0.0) continue;
                            grad->gamma[s * M + m] += ea * A[s] / N;
                            if (!scalar) grad->beta[s] += ea * B[s] * (model.exc.gamma[s * M + m] / N - 1.0 / D);
                        }
                    }
                }
                A[m] += 1.0;
            }
            per_period.push_back(ll);
        }
        return pairwise_sum(per_period);
    }

    // Matrix families.
    const auto& st = model.structure;
    const auto W = static_cast<std::size_t>(st.window);
    std::vector<double> numer(M), g_gamma;
    struct Term {
        std::size_t k;
        std::size_t target;
        double dt;
        double kernel;  // exp(alpha - beta dt)
    };
    std::vector<Term> terms;
    for (const auto& p : ds.periods) {
        const std::vector<double> gamma = conversion_table(model, {p.home_team, p.away_team});
        if (grad) g_gamma.assign(st.size(), 0.0);
        double ll = 0.0;
        for (std::size_t i = 1; i < p.events.size(); ++i) {
            const Event& e = p.events[i];
            const auto m = static_cast<std::size_t>(e.mark - 1);
            const auto zoff = static_cast<std::size_t>(e.zone - 1) * M;
            std::fill(numer.begin(), numer.end(), 0.0);
            terms.clear();
            const std::size_t first = (W > 0 && i > W) ? i - W : 0;
            for (std::size_t j = first; j < i; ++j) {
                const double dt = e.t - p.events[j].t;
                if (!(dt > 0.0)) throw std::domain_error("non-positive inter-event time in period " + p.key());
                for (const auto& entry : st.row(e.zone, p.events[j].mark)) {
                    const auto k = static_cast<std::size_t>(entry.triple);
                    const double kern = ea * std::exp(-model.exc.beta[k] * dt);
                    const auto tgt = static_cast<std::size_t>(entry.target - 1);
                    numer[tgt] += kern * gamma[k];
                    terms.push_back({k, tgt, dt, kern});
                }
            }
            double D = 0.0;
            for (std::size_t mm = 0; mm < M; ++mm) D += model.exc.delta[zoff + mm] + numer[mm];
            const double N = model.exc.delta[zoff + m] + numer[m];
            if (!(N > 0.0)) {
                flag(p, i);
                ll = kNegInf;
                continue;
            }
            ll += std::log(N) - std::log(D);
            if (!grad) continue;
            for (std::size_t mm = 0; mm < M; ++mm) grad->delta[zoff + mm] -= 1.0 / D;
            grad->delta[zoff + m] += 1.0 / N;
            for (const auto& term : terms) {
                const double coef = (term.target == m ? 1.0 / N : 0.0) - 1.0 / D;
                const double contrib = term.kernel * gamma[term.k] * coef;
                grad->alpha += contrib;
                grad->beta[term.k] -= term.dt * contrib;
                g_gamma[term.k] += term.kernel * coef;
            }
        }
        per_period.push_back(ll);
        if (!grad) continue;
        if (model.family == Family::MBeta) {
            for (std::size_t k = 0; k < st.size(); ++k) grad->gamma[k] += g_gamma[k];
            continue;
        }
        // Softmax back-propagation per row, then onto phi and omega.
        const TeamContext tc{p.home_team, p.away_team};
        for (std::size_t r = 0; r < st.rows.size(); ++r) {
            const auto& row = st.rows[r];
            if (row.empty()) continue;
            double dot = 0.0;
            for (const auto& entry : row) dot += gamma[static_cast<std::size_t>(entry.triple)] * g_gamma[static_cast<std::size_t>(entry.triple)];
            for (const auto& entry : row) {
                const auto k = static_cast<std::size_t>(entry.triple);
                if (static_cast<int>(k) == st.baseline[r]) continue;
                const double g_logit = gamma[k] * (g_gamma[k] - dot);
                grad->phi[k] += g_logit;
                const TeamId c = model.team_for_target(entry.target, tc);
                if (c != model.reference_team) {
                    grad->omega[static_cast<std::size_t>((c - 1) * model.num_marks + (entry.target - 1))] += g_logit;
                }
            }
        }
    }
    return pairwise_sum(per_period);
}

/// Background probabilities with home/away tying: delta_{m|z} = delta_{m'|4-z},
/// m' the counterpart of m. Stored as the zone-1 row and the shared half of
/// the zone-2 row (45 values for the 30-mark taxonomy).
struct TiedBackground {
    int num_marks{0};
    std::vector<double> zone1;      // M values, sums to 1
    std::vector<double> zone2_half; // M/2 values, sums to 1/2

    [[nodiscard]] std::size_t free_values() const noexcept { return zone1.size() + zone2_half.size(); }

    [[nodiscard]] std::vector<double> expand() const {
        const int M = num_marks, H = M / 2;
        std::vector<double> d(static_cast<std::size_t>(3 * M));
        for (int m = 0; m < M; ++m) {
            const int mate = m < H ? m + H : m - H;
            d[static_cast<std::size_t>(m)] = zone1[static_cast<std::size_t>(m)];
            d[static_cast<std::size_t>(M + m)] = zone2_half[static_cast<std::size_t>(m % H)];
            d[static_cast<std::size_t>(2 * M + m)] = zone1[static_cast<std::size_t>(mate)];
        }
        return d;
    }
};

/// Projects a free Z*M background table onto the tied form by averaging
/// each tied pair.
[[nodiscard]] inline TiedBackground apply_home_away_constraint(std::span<const double> delta, int num_marks, int num_zones) {
    if (num_zones != 3 || num_marks % 2 != 0 || delta.size() != static_cast<std::size_t>(3 * num_marks)) {
        throw std::invalid_argument("home/away tying needs paired marks and three zones");
    }
    const int M = num_marks, H = M / 2;
    TiedBackground tb{M, std::vector<double>(static_cast<std::size_t>(M)), std::vector<double>(static_cast<std::size_t>(H))};
    for (int m = 0; m < M; ++m) {
        const int mate = m < H ? m + H : m - H;
        tb.zone1[static_cast<std::size_t>(m)] = 0.5 * (delta[static_cast<std::size_t>(m)] + delta[static_cast<std::size_t>(2 * M + mate)]);
    }
    for (int h = 0; h < H; ++h) {
        tb.zone2_half[static_cast<std::size_t>(h)] = 0.5 * (delta[static_cast<std::size_t>(M + h)] + delta[static_cast<std::size_t>(M + H + h)]);
    }
    // zone-2 halves sum to 1/2 only if the free row was normalised; enforce it.
    double s = 0.0;
    for (double v : tb.zone2_half) s += v;
    for (double& v : tb.zone2_half) v *= 0.5 / s;
    return tb;
}

}  // namespace flexpoint
