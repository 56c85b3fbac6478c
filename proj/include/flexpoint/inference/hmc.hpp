#pragma once

// Static-trajectory HMC with dual-averaging step size and windowed diagonal
// mass adaptation. Chains run on separate threads with derived seeds.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "flexpoint/core/random.hpp"

namespace flexpoint {

/// Returns log p(u) and writes its gradient into grad.
using LogDensityFn = std::function<double(std::span<const double> u, std::span<double> grad)>;

struct HmcConfig {
    int chains{4};
    int warmup{500};
    int iters{500};
    std::uint64_t seed{1};
    double target_accept{0.8};
    double trajectory_length{1.5};
    int max_leapfrog{512};
    double init_radius{2.0};
    int init_attempts{100};
    int threads{0};  // 0: one per chain, capped by hardware concurrency
};

struct ChainResult {
    std::vector<std::vector<double>> draws;  // post-warmup, unconstrained
    std::vector<double> inv_metric;
    double step_size{0.0};
    double mean_accept{0.0};
    int divergences{0};
    long long leapfrog_steps{0};
};

class HmcError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

// Stan-style adaptation schedule: fast initial buffer, doubling slow windows,
// fast terminal buffer.
struct AdaptWindows {
    int init_buffer{75};
    int term_buffer{50};
    int base_window{25};
    int warmup{0};
    std::vector<int> window_ends;  // iterations at which the metric is updated

    explicit AdaptWindows(int n) : warmup(n) {
        if (n < 20) return;
        if (init_buffer + base_window + term_buffer > n) {
            init_buffer = static_cast<int>(0.15 * n);
            term_buffer = static_cast<int>(0.1 * n);
            base_window = n - init_buffer - term_buffer;
        }
        int start = init_buffer, size = base_window;
        const int last = n - term_buffer;
        while (start + size <= last) {
            int end = start + size;
            if (end + 2 * size > last) end = last;
            window_ends.push_back(end);
            start = end;
            size *= 2;
        }
    }
    [[nodiscard]] bool in_slow(int it) const { return it >= init_buffer && it < warmup - term_buffer; }
};

struct DualAveraging {
    double mu{0.0}, h_bar{0.0}, log_eps_bar{0.0};
    int count{0};
    double delta{0.8};
    static constexpr double kGamma = 0.05, kT0 = 10.0, kKappa = 0.75;

    void restart(double eps) {
        mu = std::log(10.0 * eps);
        h_bar = 0.0;
        log_eps_bar = 0.0;
        count = 0;
    }
    double update(double accept) {
        ++count;
        const double n = count;
        h_bar = (1.0 - 1.0 / (n + kT0)) * h_bar + (delta - accept) / (n + kT0);
        const double log_eps = mu - std::sqrt(n) / kGamma * h_bar;
        const double w = std::pow(n, -kKappa);
        log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
        return std::exp(log_eps);
    }
};

class Chain {
public:
    Chain(const LogDensityFn& f, std::size_t dim, const HmcConfig& cfg, Rng rng)
        : f_(f), dim_(dim), cfg_(cfg), rng_(std::move(rng)), q_(dim), g_(dim), inv_metric_(dim, 1.0) {}

    ChainResult run() {
        initialise();
        ChainResult res;
        double eps = find_step_size(1.0);
        DualAveraging da;
        da.delta = cfg_.target_accept;
        da.restart(eps);
        AdaptWindows windows(cfg_.warmup);
        std::size_t next_window = 0;
        std::vector<double> w_mean(dim_, 0.0), w_m2(dim_, 0.0);
        int w_n = 0;

        const int total = cfg_.warmup + cfg_.iters;
        double accept_sum = 0.0;
        for (int it = 0; it < total; ++it) {
            const bool warm = it < cfg_.warmup;
            const double accept = transition(eps, res, !warm);
            if (warm) {
                eps = da.update(accept);
                if (windows.in_slow(it)) {
                    ++w_n;
                    for (std::size_t i = 0; i < dim_; ++i) {
                        const double d = q_[i] - w_mean[i];
                        w_mean[i] += d / w_n;
                        w_m2[i] += d * (q_[i] - w_mean[i]);
                    }
                }
                if (next_window < windows.window_ends.size() && it + 1 == windows.window_ends[next_window]) {
                    ++next_window;
                    if (w_n > 2) {
                        const double n = w_n;
                        for (std::size_t i = 0; i < dim_; ++i) {
                            const double var = w_m2[i] / (n - 1.0);
                            inv_metric_[i] = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
                        }
                    }
                    std::fill(w_mean.begin(), w_mean.end(), 0.0);
                    std::fill(w_m2.begin(), w_m2.end(), 0.0);
                    w_n = 0;
                    eps = find_step_size(eps);
                    da.restart(eps);
                }
                if (it + 1 == cfg_.warmup) eps = std::exp(da.log_eps_bar);
            } else {
                accept_sum += accept;
                res.draws.push_back(q_);
            }
        }
        res.inv_metric = inv_metric_;
        res.step_size = eps;
        res.mean_accept = cfg_.iters > 0 ? accept_sum / cfg_.iters : 0.0;
        return res;
    }

private:
    // Domain errors (e.g. a special function at a pole) reject the point.
    double eval(std::span<const double> q, std::span<double> g) const {
        double lp = 0.0;
        try {
            lp = f_(q, g);
        } catch (const std::domain_error&) {
            return -std::numeric_limits<double>::infinity();
        } catch (const std::overflow_error&) {
            return -std::numeric_limits<double>::infinity();
        }
        if (!std::isfinite(lp)) return -std::numeric_limits<double>::infinity();
        for (double gi : g) {
            if (!std::isfinite(gi)) return -std::numeric_limits<double>::infinity();
        }
        return lp;
    }

    void initialise() {
        std::uniform_real_distribution<double> unif(-cfg_.init_radius, cfg_.init_radius);
        for (int attempt = 0; attempt < cfg_.init_attempts; ++attempt) {
            for (auto& v : q_) v = unif(rng_);
            lp_ = eval(q_, g_);
            if (std::isfinite(lp_)) return;
        }
        throw HmcError("could not find a finite initial point after " + std::to_string(cfg_.init_attempts) + " attempts");
    }

    double kinetic(const std::vector<double>& p) const {
        double k = 0.0;
        for (std::size_t i = 0; i < dim_; ++i) k += p[i] * p[i] * inv_metric_[i];
        return 0.5 * k;
    }

    void draw_momentum(std::vector<double>& p) {
        std::normal_distribution<double> nd;
        for (std::size_t i = 0; i < dim_; ++i) p[i] = nd(rng_) / std::sqrt(inv_metric_[i]);
    }

    // Integrates n steps from (q_, g_, lp_) into (q, g, lp); returns final H.
    double leapfrog(double eps, int n, std::vector<double>& q, std::vector<double>& p, std::vector<double>& g, double& lp,
                    long long& steps) const {
        q = q_;
        g = g_;
        lp = lp_;
        for (int s = 0; s < n; ++s) {
            for (std::size_t i = 0; i < dim_; ++i) p[i] += 0.5 * eps * g[i];
            for (std::size_t i = 0; i < dim_; ++i) q[i] += eps * inv_metric_[i] * p[i];
            lp = eval(q, g);
            ++steps;
            if (!std::isfinite(lp)) return std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < dim_; ++i) p[i] += 0.5 * eps * g[i];
        }
        return -lp + kinetic(p);
    }

    double find_step_size(double eps) {
        std::vector<double> p(dim_), q(dim_), g(dim_);
        double lp = 0.0;
        long long steps = 0;
        auto accept_log = [&](double e) {
            draw_momentum(p);
            const double h0 = -lp_ + kinetic(p);
            const double h1 = leapfrog(e, 1, q, p, g, lp, steps);
            const double d = h0 - h1;
            return std::isfinite(d) ? d : -std::numeric_limits<double>::infinity();
        };
        double a = accept_log(eps);
        const int dir = a > std::log(0.8) ? 1 : -1;
        for (int i = 0; i < 50; ++i) {
            const double next = dir > 0 ? eps * 2.0 : eps * 0.5;
            a = accept_log(next);
            if (dir > 0 && !(a > std::log(0.8))) break;
            eps = next;
            if (dir < 0 && a > std::log(0.8)) break;
        }
        return std::clamp(eps, 1e-8, 1e3);
    }

    // Only post-warmup divergences are counted.
    double transition(double eps, ChainResult& res, bool count_divergence) {
        std::vector<double>& p = p_buf_;
        p.resize(dim_);
        q_new_.resize(dim_);
        g_new_.resize(dim_);
        draw_momentum(p);
        const double h0 = -lp_ + kinetic(p);
        const int base = std::max(1, static_cast<int>(std::lround(cfg_.trajectory_length / eps)));
        std::uniform_int_distribution<int> jitter(std::max(1, base / 2), std::max(1, base + base / 2));
        const int n = std::min(cfg_.max_leapfrog, jitter(rng_));
        double lp_new = 0.0;
        const double h1 = leapfrog(eps, n, q_new_, p, g_new_, lp_new, res.leapfrog_steps);
        const double dh = h1 - h0;
        if (!std::isfinite(dh) || dh > 1000.0) {
            if (count_divergence) ++res.divergences;
            return 0.0;
        }
        const double accept = dh < 0.0 ? 1.0 : std::exp(-dh);
        if (uniform01(rng_) < accept) {
            q_.swap(q_new_);
            g_.swap(g_new_);
            lp_ = lp_new;
        }
        return accept;
    }

    const LogDensityFn& f_;
    std::size_t dim_;
    HmcConfig cfg_;
    Rng rng_;
    std::vector<double> q_, g_, inv_metric_;
    std::vector<double> p_buf_, q_new_, g_new_;
    double lp_{0.0};
};

}  // namespace detail

/// Runs cfg.chains independent chains. Reproducible for a fixed seed and
/// chain count regardless of thread scheduling.
[[nodiscard]] inline std::vector<ChainResult> run_hmc(const LogDensityFn& f, std::size_t dim, const HmcConfig& cfg) {
    if (cfg.iters < 1) throw std::invalid_argument("HMC needs at least one sampling iteration");
    if (cfg.chains < 1) throw std::invalid_argument("HMC needs at least one chain");
    std::vector<ChainResult> results(static_cast<std::size_t>(cfg.chains));
    if (dim == 0) {
        for (auto& r : results) r.draws.assign(static_cast<std::size_t>(cfg.iters), {});
        return results;
    }
    std::vector<std::string> errors(results.size());
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int c = next++; c < cfg.chains; c = next++) {
            try {
                detail::Chain chain(f, dim, cfg, make_rng(cfg.seed, {static_cast<std::uint64_t>(c)}));
                results[static_cast<std::size_t>(c)] = chain.run();
            } catch (const std::exception& e) {
                errors[static_cast<std::size_t>(c)] = "chain " + std::to_string(c + 1) + ": " + e.what();
            }
        }
    };
    int threads = cfg.threads > 0 ? cfg.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    threads = std::min(threads, cfg.chains);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors) {
        if (!e.empty()) throw HmcError(e);
    }
    return results;
}

}  // namespace flexpoint
