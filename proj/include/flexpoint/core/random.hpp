#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

namespace flexpoint {

using Rng = std::mt19937_64;

// Deterministic child seed from a root seed and a path of indices
// (e.g. {chain}, {draw, rollout}); independent of scheduling order.
[[nodiscard]] inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    std::uint64_t h = mix(root);
    for (std::uint64_t p : path) h = mix(h ^ mix(p + 0x632be59bd9b4e019ULL));
    return h;
}

[[nodiscard]] inline Rng make_rng(std::uint64_t root, std::initializer_list<std::uint64_t> path = {}) {
    return Rng{derive_seed(root, path)};
}

[[nodiscard]] inline double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>{0.0, 1.0}(rng);
}

// Categorical draw proportional to non-negative weights; index in [0, w.size()).
[[nodiscard]] inline std::size_t sample_categorical(std::span<const double> w, Rng& rng) {
    double total = 0.0;
    for (double x : w) total += x;
    double u = uniform01(rng) * total;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (w[i] <= 0.0) continue;
        last_positive = i;
        if (u < w[i]) return i;
        u -= w[i];
    }
    return last_positive;
}

}  // namespace flexpoint
