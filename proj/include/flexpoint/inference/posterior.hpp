#pragma once

// Log posterior over the unconstrained vector: time + (optionally) zone +
// mark log-likelihood, log-priors and the transform log-Jacobian, with an
// analytic gradient.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "flexpoint/core/math.hpp"
#include "flexpoint/inference/model.hpp"

namespace flexpoint {

struct LogPosteriorTerms {
    double time{0.0};
    double zone{0.0};
    double mark{0.0};
    double prior{0.0};
    double jacobian{0.0};
    std::string bad_block;  // first block that evaluated to a non-finite value

    [[nodiscard]] double total() const {
        if (!bad_block.empty()) return kNegInf;
        return time + zone + mark + prior + jacobian;
    }
};

class Posterior {
public:
    Posterior(ModelSpec spec, Dataset ds)
        : spec_(std::move(spec)), codec_(spec_), ds_(std::move(ds)), stats_(InterarrivalStats::collect(ds_)),
          zone_counts_(zone_transition_counts(ds_)) {
        if (ds_.num_marks() != spec_.num_marks || ds_.num_zones != spec_.num_zones) {
            throw std::invalid_argument("dataset dimensions do not match the model");
        }
    }

    [[nodiscard]] const ModelSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] const ParamCodec& codec() const noexcept { return codec_; }
    [[nodiscard]] const Dataset& data() const noexcept { return ds_; }
    [[nodiscard]] std::size_t dim() const noexcept { return codec_.u_dim(); }

    /// Constrained vector for u; closed-form blocks are left at zero.
    [[nodiscard]] std::vector<double> constrain(std::span<const double> u, double* log_jac = nullptr) const {
        std::vector<double> x(codec_.x_dim(), 0.0);
        const double lj = codec_.constrain(u, x);
        if (log_jac) *log_jac = lj;
        return x;
    }

    [[nodiscard]] double log_density(std::span<const double> u, std::span<double> grad = {}) const { return terms(u, grad).total(); }

    [[nodiscard]] LogPosteriorTerms terms(std::span<const double> u, std::span<double> grad = {}) const {
        LogPosteriorTerms out;
        double log_jac = 0.0;
        const auto x = constrain(u, &log_jac);
        const bool want_grad = !grad.empty();
        std::vector<double> gx(want_grad ? codec_.x_dim() : 0, 0.0);
        const ModelParams p = unflatten(spec_, codec_, x);
        const Priors& pr = spec_.priors;
        auto gview = [&](std::string_view name) { return codec_.view(std::span<double>(gx), name); };

        if (spec_.has_time_block() && codec_.find("a")->sampled) {
            std::vector<double> ga(static_cast<std::size_t>(spec_.num_marks), 0.0), gb(ga.size(), 0.0);
            out.time = stats_.log_likelihood(p.time, want_grad ? &ga : nullptr, want_grad ? &gb : nullptr);
            out.prior += time_log_prior(p.time, pr.time);
            if (want_grad) {
                auto va = gview("a"), vb = gview("b");
                for (std::size_t m = 0; m < ga.size(); ++m) {
                    va[m] = ga[m] - pr.time.shape_rate;
                    vb[m] = gb[m] - pr.time.rate_rate;
                }
            }
        }

        if (spec_.has_zone_block() && spec_.sample_zones) {
            const auto& y = zone_counts_.values;
            const auto& eta = p.zones.values;
            auto ge = want_grad ? gview("eta") : std::span<double>{};
            for (std::size_t i = 0; i < eta.size(); ++i) {
                if (y[i] > 0.0) out.zone += y[i] * std::log(eta[i]);
                if (pr.zone_conc != 1.0) out.prior += (pr.zone_conc - 1.0) * std::log(eta[i]);
                if (want_grad) ge[i] = (y[i] + pr.zone_conc - 1.0) / eta[i];
            }
            const double K = static_cast<double>(spec_.num_zones);
            out.prior += static_cast<double>(p.zones.num_states()) * (std::lgamma(K * pr.zone_conc) - K * std::lgamma(pr.zone_conc));
        }

        if (is_excitation(spec_.family)) {
            ExcitationParams g = p.marks.exc.zeros_like();
            std::vector<std::string> failures;
            out.mark = mark_log_likelihood(p.marks, ds_, want_grad ? &g : nullptr, &failures);
            out.prior += excitation_prior(p, want_grad ? &g : nullptr);
            if (want_grad) scatter_excitation_gradient(g, gx);
        }

        out.jacobian = spec_.include_jacobian ? log_jac : 0.0;
        if (!std::isfinite(out.time)) out.bad_block = "time";
        else if (!std::isfinite(out.zone)) out.bad_block = "zone";
        else if (!std::isfinite(out.mark)) out.bad_block = "mark";
        else if (!std::isfinite(out.prior)) out.bad_block = "prior";
        else if (!std::isfinite(out.jacobian)) out.bad_block = "jacobian";

        if (want_grad) {
            codec_.backprop(u, x, gx, grad, spec_.include_jacobian);
            for (double gi : grad) {
                if (!std::isfinite(gi) && out.bad_block.empty()) out.bad_block = "gradient";
            }
        }
        return out;
    }

private:
    // Adds log-priors of the excitation parameters; gradients go into g.
    double excitation_prior(const ModelParams& p, ExcitationParams* g) const {
        const Priors& pr = spec_.priors;
        const auto& exc = p.marks.exc;
        const auto M = static_cast<std::size_t>(spec_.num_marks);
        double lp = normal_log_density(exc.alpha, 0.0, pr.sigma_alpha);
        if (g) g->alpha -= exc.alpha / (pr.sigma_alpha * pr.sigma_alpha);
        for (std::size_t k = 0; k < exc.beta.size(); ++k) {
            lp += exponential_log_density(exc.beta[k], pr.beta_rate);
            if (g) g->beta[k] -= pr.beta_rate;
        }
        auto dirichlet_rows = [&](const std::vector<double>& x, std::vector<double>* gx, const std::vector<int>& rows, double conc) {
            std::size_t off = 0;
            for (int r : rows) {
                const auto K = static_cast<std::size_t>(r);
                if (K > 1) {
                    lp += dirichlet_log_density(std::span<const double>(x).subspan(off, K), conc);
                    if (gx && conc != 1.0) {
                        for (std::size_t i = off; i < off + K; ++i) (*gx)[i] += (conc - 1.0) / x[i];
                    }
                }
                off += K;
            }
        };
        if (!is_matrix(spec_.family)) {
            dirichlet_rows(exc.delta, g ? &g->delta : nullptr, {static_cast<int>(M)}, pr.delta_conc);
            dirichlet_rows(exc.gamma, g ? &g->gamma : nullptr, std::vector<int>(M, static_cast<int>(M)), pr.gamma_conc);
            return lp;
        }
        if (spec_.tie_home_away) {
            // Densities on the free rows; the zone-2 half is rescaled to a simplex.
            const std::size_t H = M / 2;
            std::vector<double> z1(exc.delta.begin(), exc.delta.begin() + static_cast<std::ptrdiff_t>(M));
            std::vector<double> z2(H);
            for (std::size_t h = 0; h < H; ++h) z2[h] = 2.0 * exc.delta[M + h];
            lp += dirichlet_log_density(z1, pr.zone_delta_conc) + dirichlet_log_density(z2, pr.zone_delta_conc);
            if (g && pr.zone_delta_conc != 1.0) {
                for (std::size_t m = 0; m < M; ++m) g->delta[m] += (pr.zone_delta_conc - 1.0) / exc.delta[m];
                for (std::size_t h = 0; h < H; ++h) g->delta[M + h] += (pr.zone_delta_conc - 1.0) / exc.delta[M + h];
            }
        } else {
            dirichlet_rows(exc.delta, g ? &g->delta : nullptr, std::vector<int>(static_cast<std::size_t>(spec_.num_zones), static_cast<int>(M)),
                           pr.zone_delta_conc);
        }
        if (spec_.family == Family::MBeta) {
            if (const auto* b = codec_.find("gamma")) dirichlet_rows(exc.gamma, g ? &g->gamma : nullptr, b->row_sizes, pr.gamma_conc);
            return lp;
        }
        const double s2 = pr.sigma_logit * pr.sigma_logit;
        for (int k : spec_.phi_triples) {
            const double v = exc.phi[static_cast<std::size_t>(k)];
            lp += normal_log_density(v, 0.0, pr.sigma_logit);
            if (g) g->phi[static_cast<std::size_t>(k)] -= v / s2;
        }
        for (const auto& [c, m] : spec_.omega_free) {
            const double v = p.marks.omega_at(c, m);
            lp += normal_log_density(v, 0.0, pr.sigma_logit);
            if (g) g->omega[static_cast<std::size_t>((c - 1) * spec_.num_marks + (m - 1))] -= v / s2;
        }
        return lp;
    }

    void scatter_excitation_gradient(const ExcitationParams& g, std::vector<double>& gx) const {
        auto put = [&](std::string_view name, std::span<const double> src) {
            auto v = codec_.view(std::span<double>(gx), name);
            std::copy(src.begin(), src.end(), v.begin());
        };
        put("alpha", std::span<const double>(&g.alpha, 1));
        put("beta", g.beta);
        const auto M = static_cast<std::size_t>(spec_.num_marks);
        if (spec_.tie_home_away) {
            const std::size_t H = M / 2;
            auto v1 = codec_.view(std::span<double>(gx), "delta_z1");
            auto v2 = codec_.view(std::span<double>(gx), "delta_z2");
            for (std::size_t m = 0; m < M; ++m) {
                const std::size_t mate = m < H ? m + H : m - H;
                v1[m] = g.delta[m] + g.delta[2 * M + mate];
            }
            for (std::size_t h = 0; h < H; ++h) v2[h] = g.delta[M + h] + g.delta[M + H + h];
        } else {
            put("delta", g.delta);
        }
        if (spec_.family == Family::MBetaA) {
            auto vp = codec_.view(std::span<double>(gx), "phi");
            for (std::size_t i = 0; i < spec_.phi_triples.size(); ++i) vp[i] = g.phi[static_cast<std::size_t>(spec_.phi_triples[i])];
            auto vo = codec_.view(std::span<double>(gx), "omega");
            for (std::size_t i = 0; i < spec_.omega_free.size(); ++i) {
                const auto& [c, m] = spec_.omega_free[i];
                vo[i] = g.omega[static_cast<std::size_t>((c - 1) * spec_.num_marks + (m - 1))];
            }
        } else if (codec_.find("gamma")) {
            put("gamma", g.gamma);
        }
    }

    ModelSpec spec_;
    ParamCodec codec_;
    Dataset ds_;
    InterarrivalStats stats_;
    ZoneCounts zone_counts_;
};

}  // namespace flexpoint
