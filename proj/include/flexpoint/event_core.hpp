#pragma once

// Data model for marked spatio-temporal event sequences grouped into
// independent game periods, plus CSV / JSON-sidecar ingestion.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace flexpoint {

using MarkId = int;  // 1..M
using ZoneId = int;  // 1..Z
using TeamId = int;  // 1..C, 0 = unknown

inline constexpr int kDefaultZones = 3;
inline constexpr double kTieJitter = 1e-3;
inline constexpr double kTieTolerance = 1e-9;

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Mark labels. Marks 1..M/2 belong to the home side and M/2+1..M to the
/// away side; the counterpart of home mark m is m + M/2.
class MarkTaxonomy {
public:
    MarkTaxonomy() = default;
    explicit MarkTaxonomy(std::vector<std::string> labels) : labels_(std::move(labels)) {
        if (labels_.empty()) throw std::invalid_argument("taxonomy needs at least one mark");
        for (std::size_t i = 0; i < labels_.size(); ++i) {
            if (!index_.emplace(labels_[i], static_cast<MarkId>(i + 1)).second) {
                throw std::invalid_argument("duplicate mark label: " + labels_[i]);
            }
        }
    }

    [[nodiscard]] static MarkTaxonomy football() {
        static const char* kinds[] = {"Win",   "Dribble", "Pass_S",    "Pass_U",   "Shot",
                                      "Keeper", "Save",   "Clear",     "Lose",     "Goal",
                                      "Foul",  "Out_Throw", "Out_GK", "Out_Corner", "Pass_O"};
        std::vector<std::string> labels;
        for (const char* side : {"Home_", "Away_"}) {
            for (const char* k : kinds) labels.push_back(std::string(side) + k);
        }
        return MarkTaxonomy(std::move(labels));
    }

    // Home_1..Home_{M/2}, Away_1..Away_{M/2}; odd M gets plain M1..MM labels.
    [[nodiscard]] static MarkTaxonomy generic(int num_marks) {
        std::vector<std::string> labels;
        if (num_marks % 2 == 0) {
            for (const char* side : {"Home_", "Away_"}) {
                for (int m = 1; m <= num_marks / 2; ++m) labels.push_back(side + std::to_string(m));
            }
        } else {
            for (int m = 1; m <= num_marks; ++m) labels.push_back("M" + std::to_string(m));
        }
        return MarkTaxonomy(std::move(labels));
    }

    [[nodiscard]] int size() const noexcept { return static_cast<int>(labels_.size()); }
    [[nodiscard]] bool paired() const noexcept { return size() % 2 == 0; }
    [[nodiscard]] int half() const noexcept { return size() / 2; }
    [[nodiscard]] bool valid(MarkId m) const noexcept { return m >= 1 && m <= size(); }
    [[nodiscard]] bool is_home(MarkId m) const noexcept { return m <= half(); }
    [[nodiscard]] MarkId counterpart(MarkId m) const {
        if (!paired()) throw std::logic_error("taxonomy has no home/away pairing");
        return is_home(m) ? m + half() : m - half();
    }
    [[nodiscard]] const std::string& label(MarkId m) const { return labels_.at(static_cast<std::size_t>(m - 1)); }
    [[nodiscard]] std::optional<MarkId> find(std::string_view label) const {
        auto it = index_.find(std::string(label));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }
    [[nodiscard]] const std::vector<std::string>& labels() const noexcept { return labels_; }

private:
    std::vector<std::string> labels_;
    std::unordered_map<std::string, MarkId> index_;
};

struct Event {
    double t{0.0};
    ZoneId zone{1};
    MarkId mark{1};
    TeamId team{0};  // as recorded; advisory

    friend bool operator==(const Event&, const Event&) = default;
};

/// One uninterrupted half. Event 0 conditions the sequence but is not modelled.
struct GamePeriod {
    std::int64_t game_id{0};
    int period{1};
    TeamId home_team{0};
    TeamId away_team{0};
    std::vector<Event> events;
    double t_end{0.0};

    [[nodiscard]] static bool is_modelled(std::size_t index) noexcept { return index > 0; }
    [[nodiscard]] std::size_t modelled_count() const noexcept { return events.empty() ? 0 : events.size() - 1; }
    [[nodiscard]] std::string key() const { return std::to_string(game_id) + "/" + std::to_string(period); }

    friend bool operator==(const GamePeriod&, const GamePeriod&) = default;
};

struct Dataset {
    std::vector<GamePeriod> periods;
    std::map<TeamId, std::string> teams;
    MarkTaxonomy taxonomy = MarkTaxonomy::football();
    int num_zones{kDefaultZones};
    int num_teams{0};

    [[nodiscard]] int num_marks() const noexcept { return taxonomy.size(); }
    [[nodiscard]] std::size_t num_events() const noexcept {
        std::size_t n = 0;
        for (const auto& p : periods) n += p.events.size();
        return n;
    }
    [[nodiscard]] std::size_t num_modelled_events() const noexcept {
        std::size_t n = 0;
        for (const auto& p : periods) n += p.modelled_count();
        return n;
    }
    // Team attempting an event of mark m in period p.
    [[nodiscard]] TeamId team_of(const GamePeriod& p, MarkId m) const {
        return taxonomy.is_home(m) ? p.home_team : p.away_team;
    }
    [[nodiscard]] std::vector<std::int64_t> game_ids() const {
        std::vector<std::int64_t> ids;
        for (const auto& p : periods) {
            if (std::find(ids.begin(), ids.end(), p.game_id) == ids.end()) ids.push_back(p.game_id);
        }
        return ids;
    }

    friend bool operator==(const Dataset& a, const Dataset& b) {
        return a.periods == b.periods && a.teams == b.teams && a.taxonomy.labels() == b.taxonomy.labels() &&
               a.num_zones == b.num_zones && a.num_teams == b.num_teams;
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

// Comma-separated fields; double quotes protect embedded commas.
inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
        } else if (c == ',' && !quoted) {
            out.push_back(trim(field));
            field.clear();
        } else {
            field += c;
        }
    }
    out.push_back(trim(field));
    return out;
}

inline double parse_double(const std::string& s, std::size_t line, const char* field) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError(line, std::string("field '") + field + "' is not a number: '" + s + "'");
    }
}

inline long long parse_int(const std::string& s, std::size_t line, const char* field) {
    try {
        std::size_t used = 0;
        long long v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError(line, std::string("field '") + field + "' is not an integer: '" + s + "'");
    }
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

/// Optional per-game information: team names, home/away assignment, period horizons.
struct Sidecar {
    std::map<TeamId, std::string> teams;
    struct Game {
        std::int64_t id{0};
        TeamId home_team{0};
        TeamId away_team{0};
        std::map<int, double> period_end;
    };
    std::vector<Game> games;

    [[nodiscard]] static Sidecar from_json(const nlohmann::json& j) {
        Sidecar s;
        if (j.contains("teams")) {
            for (const auto& [k, v] : j.at("teams").items()) s.teams[std::stoi(k)] = v.get<std::string>();
        }
        if (j.contains("games")) {
            for (const auto& g : j.at("games")) {
                Game game;
                game.id = g.at("id").get<std::int64_t>();
                game.home_team = g.value("home_team", 0);
                game.away_team = g.value("away_team", 0);
                if (g.contains("period_end")) {
                    for (const auto& [k, v] : g.at("period_end").items()) game.period_end[std::stoi(k)] = v.get<double>();
                }
                s.games.push_back(std::move(game));
            }
        }
        return s;
    }

    [[nodiscard]] static Sidecar parse(std::string_view text) { return from_json(nlohmann::json::parse(text)); }

    [[nodiscard]] const Game* find(std::int64_t id) const {
        for (const auto& g : games) {
            if (g.id == id) return &g;
        }
        return nullptr;
    }
};

struct ParseOptions {
    MarkTaxonomy taxonomy = MarkTaxonomy::football();
    int num_zones{kDefaultZones};
};

/// Parses `i,id,period,team_id,time,zone,mark[,home_team,away_team]` rows.
/// Rows are grouped by (id, period) in order of first appearance. Equal
/// timestamps within a period are spread as t + k*1e-3 for the k-th repeat.
[[nodiscard]] inline Dataset parse_events(std::string_view csv_text, const Sidecar* sidecar = nullptr,
                                          const ParseOptions& options = {}) {
    Dataset ds;
    ds.taxonomy = options.taxonomy;
    ds.num_zones = options.num_zones;
    const int num_marks = ds.taxonomy.size();

    std::istringstream in{std::string(csv_text)};
    std::string raw;
    std::size_t line_no = 0;
    bool header_seen = false;
    bool has_team_columns = false;

    struct Cursor {
        double last_raw{0.0};
        double last_time{0.0};
        int ties{0};
    };
    std::map<std::pair<std::int64_t, int>, std::size_t> period_index;
    std::vector<Cursor> cursors;
    int max_team = 0;

    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = detail::trim(raw);
        if (line.empty() || line.front() == '#') continue;
        auto fields = detail::split_csv_line(line);
        if (!header_seen) {
            static const std::vector<std::string> required{"i", "id", "period", "team_id", "time", "zone", "mark"};
            if (fields.size() < required.size() || !std::equal(required.begin(), required.end(), fields.begin())) {
                throw ParseError(line_no, "expected header i,id,period,team_id,time,zone,mark");
            }
            if (fields.size() == 9 && fields[7] == "home_team" && fields[8] == "away_team") {
                has_team_columns = true;
            } else if (fields.size() != 7) {
                throw ParseError(line_no, "unexpected extra header columns");
            }
            header_seen = true;
            continue;
        }
        const std::size_t expected = has_team_columns ? 9 : 7;
        if (fields.size() != expected) {
            throw ParseError(line_no, "expected " + std::to_string(expected) + " fields, got " + std::to_string(fields.size()));
        }
        (void)detail::parse_int(fields[0], line_no, "i");
        const auto game = static_cast<std::int64_t>(detail::parse_int(fields[1], line_no, "id"));
        const auto period = static_cast<int>(detail::parse_int(fields[2], line_no, "period"));
        const auto team = static_cast<TeamId>(detail::parse_int(fields[3], line_no, "team_id"));
        const double t_raw = detail::parse_double(fields[4], line_no, "time");
        const auto zone = static_cast<ZoneId>(detail::parse_int(fields[5], line_no, "zone"));
        const auto mark = static_cast<MarkId>(detail::parse_int(fields[6], line_no, "mark"));
        if (t_raw < 0.0) throw ParseError(line_no, "negative time");
        if (zone < 1 || zone > ds.num_zones) throw ParseError(line_no, "zone out of range: " + fields[5]);
        if (mark < 1 || mark > num_marks) throw ParseError(line_no, "mark out of range: " + fields[6]);
        if (team < 0) throw ParseError(line_no, "negative team_id");
        max_team = std::max(max_team, team);

        auto key = std::make_pair(game, period);
        auto [it, inserted] = period_index.emplace(key, ds.periods.size());
        if (inserted) {
            GamePeriod p;
            p.game_id = game;
            p.period = period;
            ds.periods.push_back(std::move(p));
            cursors.emplace_back();
        }
        GamePeriod& p = ds.periods[it->second];
        Cursor& cur = cursors[it->second];
        if (has_team_columns) {
            p.home_team = static_cast<TeamId>(detail::parse_int(fields[7], line_no, "home_team"));
            p.away_team = static_cast<TeamId>(detail::parse_int(fields[8], line_no, "away_team"));
        }

        double t = t_raw;
        if (!p.events.empty()) {
            if (t_raw < cur.last_raw - kTieTolerance) {
                throw ParseError(line_no, "time decreases within period " + p.key());
            }
            if (std::abs(t_raw - cur.last_raw) <= kTieTolerance) {
                ++cur.ties;
                t = cur.last_raw + cur.ties * kTieJitter;
            } else {
                cur.ties = 0;
            }
            if (t <= cur.last_time) throw ParseError(line_no, "tie jitter overlaps the next timestamp in period " + p.key());
        }
        if (cur.ties == 0) cur.last_raw = t_raw;
        cur.last_time = t;
        p.events.push_back(Event{t, zone, mark, team});
    }
    if (!header_seen) throw ParseError(line_no, "missing header");

    for (auto& p : ds.periods) {
        const Sidecar::Game* g = sidecar ? sidecar->find(p.game_id) : nullptr;
        if (g && g->home_team > 0) p.home_team = g->home_team;
        if (g && g->away_team > 0) p.away_team = g->away_team;
        // Infer sides from the mark prefix when nothing else says.
        for (const auto& e : p.events) {
            if (!ds.taxonomy.paired()) break;
            if (ds.taxonomy.is_home(e.mark) && p.home_team == 0) p.home_team = e.team;
            if (!ds.taxonomy.is_home(e.mark) && p.away_team == 0) p.away_team = e.team;
        }
        p.t_end = p.events.empty() ? 0.0 : p.events.back().t;
        if (g) {
            auto pe = g->period_end.find(p.period);
            if (pe != g->period_end.end()) p.t_end = pe->second;
        }
        max_team = std::max({max_team, p.home_team, p.away_team});
    }
    if (sidecar) {
        ds.teams = sidecar->teams;
        if (!ds.teams.empty()) max_team = std::max(max_team, ds.teams.rbegin()->first);
    }
    ds.num_teams = max_team;
    return ds;
}

[[nodiscard]] inline std::string serialize_events(const Dataset& ds) {
    std::string out = "i,id,period,team_id,time,zone,mark\n";
    std::size_t i = 0;
    for (const auto& p : ds.periods) {
        for (const auto& e : p.events) {
            out += std::to_string(++i) + ',' + std::to_string(p.game_id) + ',' + std::to_string(p.period) + ',' +
                   std::to_string(e.team) + ',' + detail::format_double(e.t) + ',' + std::to_string(e.zone) + ',' +
                   std::to_string(e.mark) + '\n';
        }
    }
    return out;
}

[[nodiscard]] inline nlohmann::json sidecar_json(const Dataset& ds) {
    nlohmann::json j;
    j["teams"] = nlohmann::json::object();
    for (const auto& [id, name] : ds.teams) j["teams"][std::to_string(id)] = name;
    j["games"] = nlohmann::json::array();
    for (auto id : ds.game_ids()) {
        nlohmann::json g;
        g["id"] = id;
        g["period_end"] = nlohmann::json::object();
        for (const auto& p : ds.periods) {
            if (p.game_id != id) continue;
            g["home_team"] = p.home_team;
            g["away_team"] = p.away_team;
            g["period_end"][std::to_string(p.period)] = p.t_end;
        }
        j["games"].push_back(std::move(g));
    }
    return j;
}

/// Zone of a normalised pitch coordinate: equal-length bands along x, with a
/// boundary point assigned to the higher zone. y does not enter.
[[nodiscard]] inline ZoneId zone_of(double x, double /*y*/, int num_zones = kDefaultZones) {
    if (!(x >= 0.0 && x <= 100.0)) throw std::out_of_range("pitch x coordinate outside [0,100]");
    ZoneId z = 1;
    for (int k = 1; k < num_zones; ++k) {
        if (x >= 100.0 * k / num_zones) z = k + 1;
    }
    return z;
}

/// First `n_train_games` games (by first appearance) go to train, the rest to test.
[[nodiscard]] inline std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, std::size_t n_train_games) {
    const auto ids = ds.game_ids();
    if (n_train_games > ids.size()) {
        throw std::invalid_argument("n_train_games (" + std::to_string(n_train_games) + ") exceeds the " +
                                    std::to_string(ids.size()) + " available games");
    }
    const std::set<std::int64_t> train_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train_games));
    Dataset train = ds, test = ds;
    train.periods.clear();
    test.periods.clear();
    for (const auto& p : ds.periods) (train_ids.count(p.game_id) ? train : test).periods.push_back(p);
    return {std::move(train), std::move(test)};
}

struct ValidationReport {
    struct PeriodSummary {
        std::string key;
        std::size_t events{0};
    };
    std::vector<PeriodSummary> periods;
    std::vector<std::vector<std::size_t>> zone_mark_counts;  // [mark-1][zone-1]
    std::vector<std::string> violations;

    [[nodiscard]] bool ok() const noexcept { return violations.empty(); }
};

[[nodiscard]] inline ValidationReport validate(const Dataset& ds) {
    ValidationReport r;
    if (ds.periods.empty()) return r;
    const int M = ds.num_marks();
    r.zone_mark_counts.assign(static_cast<std::size_t>(M), std::vector<std::size_t>(static_cast<std::size_t>(ds.num_zones), 0));
    std::set<std::string> seen;
    for (const auto& p : ds.periods) {
        r.periods.push_back({p.key(), p.events.size()});
        if (!seen.insert(p.key()).second) r.violations.push_back("duplicate period id " + p.key());
        if (ds.taxonomy.paired() && (p.home_team <= 0 || p.away_team <= 0)) {
            r.violations.push_back("period " + p.key() + ": home/away team unknown");
        }
        for (std::size_t i = 0; i < p.events.size(); ++i) {
            const Event& e = p.events[i];
            const std::string where = "period " + p.key() + " event " + std::to_string(i + 1);
            if (!ds.taxonomy.valid(e.mark)) {
                r.violations.push_back(where + ": mark out of range");
                continue;
            }
            if (e.zone < 1 || e.zone > ds.num_zones) {
                r.violations.push_back(where + ": zone out of range");
                continue;
            }
            ++r.zone_mark_counts[static_cast<std::size_t>(e.mark - 1)][static_cast<std::size_t>(e.zone - 1)];
            if (e.t < 0.0) r.violations.push_back(where + ": negative time");
            if (e.t > p.t_end) r.violations.push_back(where + ": time after period end");
            if (i > 0 && !(e.t > p.events[i - 1].t)) r.violations.push_back(where + ": time not strictly increasing");
            if (ds.taxonomy.paired() && e.team != 0) {
                const TeamId expected = ds.team_of(p, e.mark);
                if (expected != 0 && expected != e.team) {
                    r.violations.push_back(where + ": team_id " + std::to_string(e.team) + " disagrees with mark side (team " +
                                           std::to_string(expected) + ")");
                }
            }
        }
    }
    return r;
}

}  // namespace flexpoint
