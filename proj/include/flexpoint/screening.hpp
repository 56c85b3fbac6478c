#pragma once

// Association-rule screening of (source mark -> target mark | zone) pairs.
// An event "supports" m' -> m when mark m' appears among its W predecessors
// in the same period. Pairs are ranked per zone by lift.

#include <algorithm>
#include <cstddef>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "flexpoint/event_core.hpp"

namespace flexpoint {

struct PairCounts {
    int num_marks{0};
    int num_zones{0};
    int window{1};
    std::vector<std::size_t> support;           // [(src-1)*M*Z + (tgt-1)*Z + (z-1)]
    std::vector<std::size_t> target_count;      // [(tgt-1)*Z + (z-1)]
    std::vector<std::size_t> source_presence;   // [(src-1)*Z + (z-1)]: events at z with src in window

    [[nodiscard]] std::size_t& support_at(MarkId src, MarkId tgt, ZoneId z) {
        return support[static_cast<std::size_t>(((src - 1) * num_marks + (tgt - 1)) * num_zones + (z - 1))];
    }
    [[nodiscard]] std::size_t support_at(MarkId src, MarkId tgt, ZoneId z) const {
        return support[static_cast<std::size_t>(((src - 1) * num_marks + (tgt - 1)) * num_zones + (z - 1))];
    }
    [[nodiscard]] std::size_t targets(MarkId tgt, ZoneId z) const {
        return target_count[static_cast<std::size_t>((tgt - 1) * num_zones + (z - 1))];
    }
    [[nodiscard]] std::size_t presence(MarkId src, ZoneId z) const {
        return source_presence[static_cast<std::size_t>((src - 1) * num_zones + (z - 1))];
    }
    [[nodiscard]] std::size_t zone_total(ZoneId z) const {
        std::size_t n = 0;
        for (MarkId m = 1; m <= num_marks; ++m) n += targets(m, z);
        return n;
    }

    // (support / targets) / (presence / zone_total); 0 when undefined.
    [[nodiscard]] double lift(MarkId src, MarkId tgt, ZoneId z) const {
        const auto s = static_cast<double>(support_at(src, tgt, z));
        const auto n_t = static_cast<double>(targets(tgt, z));
        const auto pres = static_cast<double>(presence(src, z));
        const auto n_z = static_cast<double>(zone_total(z));
        if (s == 0.0 || n_t == 0.0 || pres == 0.0) return 0.0;
        return (s * n_z) / (n_t * pres);
    }
};

[[nodiscard]] inline PairCounts count_pair_support(const Dataset& ds, int window) {
    if (window < 1) throw std::invalid_argument("screening window W must be >= 1");
    PairCounts pc;
    pc.num_marks = ds.num_marks();
    pc.num_zones = ds.num_zones;
    pc.window = window;
    const auto M = static_cast<std::size_t>(pc.num_marks), Z = static_cast<std::size_t>(pc.num_zones);
    pc.support.assign(M * M * Z, 0);
    pc.target_count.assign(M * Z, 0);
    pc.source_presence.assign(M * Z, 0);

    std::vector<char> in_window(M);
    for (const auto& p : ds.periods) {
        for (std::size_t i = 1; i < p.events.size(); ++i) {
            const Event& e = p.events[i];
            std::fill(in_window.begin(), in_window.end(), 0);
            const std::size_t first = i > static_cast<std::size_t>(window) ? i - static_cast<std::size_t>(window) : 0;
            for (std::size_t j = first; j < i; ++j) in_window[static_cast<std::size_t>(p.events[j].mark - 1)] = 1;
            ++pc.target_count[static_cast<std::size_t>(e.mark - 1) * Z + static_cast<std::size_t>(e.zone - 1)];
            for (std::size_t src = 0; src < M; ++src) {
                if (!in_window[src]) continue;
                ++pc.support[(src * M + static_cast<std::size_t>(e.mark - 1)) * Z + static_cast<std::size_t>(e.zone - 1)];
                ++pc.source_presence[src * Z + static_cast<std::size_t>(e.zone - 1)];
            }
        }
    }
    return pc;
}

struct Rule {
    ZoneId zone{1};
    MarkId source{1};
    MarkId target{1};
    std::size_t support{0};
    double lift{0.0};

    friend bool operator==(const Rule&, const Rule&) = default;
};

enum class RetentionScope { PerZone, Global };

struct RuleSet {
    int window{1};
    std::size_t n{0};
    RetentionScope scope{RetentionScope::PerZone};
    std::vector<Rule> rules;  // zone-major, rank order within zone

    [[nodiscard]] bool contains(MarkId src, MarkId tgt, ZoneId z) const {
        return std::any_of(rules.begin(), rules.end(),
                           [&](const Rule& r) { return r.zone == z && r.source == src && r.target == tgt; });
    }
    [[nodiscard]] std::set<std::tuple<int, int, int>> triples() const {
        std::set<std::tuple<int, int, int>> out;
        for (const auto& r : rules) out.emplace(r.zone, r.source, r.target);
        return out;
    }
    [[nodiscard]] std::size_t count_in_zone(ZoneId z) const {
        return static_cast<std::size_t>(std::count_if(rules.begin(), rules.end(), [&](const Rule& r) { return r.zone == z; }));
    }
};

namespace detail {
// Higher lift first, then higher support, then lexicographic (source, target).
inline bool rule_before(const Rule& a, const Rule& b) {
    if (a.lift != b.lift) return a.lift > b.lift;
    if (a.support != b.support) return a.support > b.support;
    return std::tie(a.source, a.target, a.zone) < std::tie(b.source, b.target, b.zone);
}
}  // namespace detail

[[nodiscard]] inline RuleSet select_rules(const PairCounts& pc, std::size_t n,
                                          RetentionScope scope = RetentionScope::PerZone) {
    if (n < 1) throw std::invalid_argument("screening threshold N must be >= 1");
    RuleSet rs;
    rs.window = pc.window;
    rs.n = n;
    rs.scope = scope;
    std::vector<std::vector<Rule>> per_zone(static_cast<std::size_t>(pc.num_zones));
    for (ZoneId z = 1; z <= pc.num_zones; ++z) {
        for (MarkId s = 1; s <= pc.num_marks; ++s) {
            for (MarkId t = 1; t <= pc.num_marks; ++t) {
                const std::size_t sup = pc.support_at(s, t, z);
                if (sup == 0) continue;
                per_zone[static_cast<std::size_t>(z - 1)].push_back(Rule{z, s, t, sup, pc.lift(s, t, z)});
            }
        }
    }
    if (scope == RetentionScope::PerZone) {
        for (auto& zone_rules : per_zone) {
            std::sort(zone_rules.begin(), zone_rules.end(), detail::rule_before);
            if (zone_rules.size() > n) zone_rules.resize(n);
            rs.rules.insert(rs.rules.end(), zone_rules.begin(), zone_rules.end());
        }
    } else {
        std::vector<Rule> all;
        for (auto& zr : per_zone) all.insert(all.end(), zr.begin(), zr.end());
        std::sort(all.begin(), all.end(), detail::rule_before);
        if (all.size() > n) all.resize(n);
        std::stable_sort(all.begin(), all.end(), [](const Rule& a, const Rule& b) { return a.zone < b.zone; });
        rs.rules = std::move(all);
    }
    return rs;
}

[[nodiscard]] inline std::string serialize_rules(const RuleSet& rs) {
    std::ostringstream out;
    out << "# window=" << rs.window << ",n=" << rs.n << ",scope=" << (rs.scope == RetentionScope::PerZone ? "zone" : "global")
        << '\n';
    out << "zone,source_mark,target_mark,support,lift\n";
    for (const auto& r : rs.rules) {
        out << r.zone << ',' << r.source << ',' << r.target << ',' << r.support << ',' << detail::format_double(r.lift) << '\n';
    }
    return out.str();
}

[[nodiscard]] inline RuleSet parse_rules(std::string_view text) {
    RuleSet rs;
    std::istringstream in{std::string(text)};
    std::string raw;
    std::size_t line_no = 0;
    bool header = false;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = detail::trim(raw);
        if (line.empty()) continue;
        if (line.front() == '#') {
            for (const auto& kv : detail::split_csv_line(line.substr(1))) {
                auto eq = kv.find('=');
                if (eq == std::string::npos) continue;
                const std::string key = detail::trim(kv.substr(0, eq)), value = detail::trim(kv.substr(eq + 1));
                if (key == "window") rs.window = static_cast<int>(detail::parse_int(value, line_no, "window"));
                if (key == "n") rs.n = static_cast<std::size_t>(detail::parse_int(value, line_no, "n"));
                if (key == "scope") rs.scope = value == "global" ? RetentionScope::Global : RetentionScope::PerZone;
            }
            continue;
        }
        if (!header) {
            if (line != "zone,source_mark,target_mark,support,lift") throw ParseError(line_no, "bad rule table header");
            header = true;
            continue;
        }
        auto f = detail::split_csv_line(line);
        if (f.size() != 5) throw ParseError(line_no, "expected 5 fields");
        rs.rules.push_back(Rule{static_cast<ZoneId>(detail::parse_int(f[0], line_no, "zone")),
                                static_cast<MarkId>(detail::parse_int(f[1], line_no, "source_mark")),
                                static_cast<MarkId>(detail::parse_int(f[2], line_no, "target_mark")),
                                static_cast<std::size_t>(detail::parse_int(f[3], line_no, "support")),
                                detail::parse_double(f[4], line_no, "lift")});
    }
    return rs;
}

}  // namespace flexpoint
