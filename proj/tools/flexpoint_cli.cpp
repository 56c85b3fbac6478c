#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <boost/math/distributions/gamma.hpp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "flexpoint/flexpoint.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace flexpoint;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitUsage = 64;

struct ValidationFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UsageFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Top-level keys set global options; a nested object sets the options of the
// subcommand it is named after.
class JsonConfig : public CLI::Config {
public:
    std::string to_config(const CLI::App* app, bool defaults, bool comments, std::string prefix) const override {
        return CLI::ConfigTOML().to_config(app, defaults, comments, std::move(prefix));
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
        }
        if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
        std::vector<CLI::ConfigItem> items;
        flatten(j, {}, items);
        return items;
    }

private:
    static void flatten(const json& j, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& out) {
        for (const auto& [key, v] : j.items()) {
            if (v.is_object()) {
                auto p = parents;
                p.push_back(key);
                flatten(v, p, out);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = key;
            if (v.is_array()) {
                for (const auto& e : v) item.inputs.push_back(scalar(e));
            } else {
                item.inputs.push_back(scalar(v));
            }
            out.push_back(std::move(item));
        }
    }
    static std::string scalar(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }
};

std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ValidationFailure("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string absolute(const std::string& p) { return p.empty() ? p : fs::absolute(p).lexically_normal().string(); }

struct Global {
    std::string out{"."};
    int threads{0};
};

/// Collects artifacts of one command run and writes its manifest.
class Run {
public:
    Run(std::string command, json config, const Global& g, std::optional<std::uint64_t> seed)
        : command_(std::move(command)), config_(std::move(config)), dir_(g.out), threads_(g.threads), seed_(seed) {
        hash_ = fnv1a_hex(command_ + config_.dump());
        fs::create_directories(dir_);
    }

    [[nodiscard]] std::string header() const {
        std::string h = "# flexpoint=" + std::string(kVersion) + " command=" + command_ + " config_hash=" + hash_;
        if (seed_) h += " seed=" + std::to_string(*seed_);
        return h + '\n';
    }

    fs::path write(const std::string& name, const std::string& body, bool with_header = true) {
        const fs::path p = dir_ / name;
        std::ofstream out(p, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + p.string());
        if (with_header) out << header();
        out << body;
        if (!out) throw std::runtime_error("failed writing " + p.string());
        artifacts_.push_back(name);
        return p;
    }

    json& summary() { return summary_; }

    void finish(int status) {
        json m;
        m["tool"] = "flexpoint";
        m["version"] = kVersion;
        m["command"] = command_;
        m["config"] = config_;
        m["config_hash"] = hash_;
        m["seed"] = seed_ ? json(*seed_) : json(nullptr);
        m["threads"] = threads_;
        m["artifacts"] = artifacts_;
        m["summary"] = summary_;
        m["exit_status"] = status;
        std::ofstream(dir_ / (command_ + ".manifest.json")) << m.dump(2) << '\n';
    }

    [[nodiscard]] const fs::path& dir() const { return dir_; }

private:
    std::string command_;
    json config_;
    fs::path dir_;
    int threads_;
    std::optional<std::uint64_t> seed_;
    std::string hash_;
    std::vector<std::string> artifacts_;
    json summary_ = json::object();
};

int worker_count(int requested) {
    if (requested > 0) return requested;
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

template <class F>
void parallel_for(std::size_t n, int threads, F&& f) {
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) f(i);
    };
    const int k = std::min<int>(worker_count(threads), static_cast<int>(n));
    if (k <= 1) {
        work();
        return;
    }
    std::vector<std::thread> pool;
    for (int t = 0; t < k; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
}

// ---------------------------------------------------------------- data

struct DataOptions {
    std::string path;
    std::string sidecar;
    int marks{0};  // 0: from the sidecar, else the football taxonomy
    int zones{0};  // 0: from the sidecar, else three

    [[nodiscard]] json to_json() const {
        return {{"data", absolute(path)}, {"sidecar", absolute(sidecar)}, {"marks", marks}, {"zones", zones}};
    }
    static DataOptions from_json(const json& j) {
        return {j.at("data").get<std::string>(), j.value("sidecar", std::string()), j.value("marks", 0), j.value("zones", 0)};
    }
};

void add_data_options(CLI::App* c, DataOptions& d, const std::string& what = "event CSV") {
    c->add_option("--data", d.path, what);
    c->add_option("--sidecar", d.sidecar, "JSON sidecar with teams, period ends, marks and zones");
    c->add_option("--marks", d.marks, "number of marks for a generic taxonomy (0: sidecar or football)")->check(CLI::NonNegativeNumber);
    c->add_option("--zones", d.zones, "number of zones (0: sidecar or 3)")->check(CLI::NonNegativeNumber);
}

Dataset load_dataset(const DataOptions& d) {
    if (d.path.empty()) throw UsageFailure("--data is required");
    const std::string text = read_file(d.path);
    ParseOptions opt;
    std::optional<Sidecar> sidecar;
    if (!d.sidecar.empty()) {
        json j;
        try {
            j = json::parse(read_file(d.sidecar));
            sidecar = Sidecar::from_json(j);
        } catch (const json::exception& e) {
            throw ValidationFailure("bad sidecar " + d.sidecar + ": " + e.what());
        }
        if (j.contains("marks")) opt.taxonomy = MarkTaxonomy(j.at("marks").get<std::vector<std::string>>());
        if (j.contains("zones")) opt.num_zones = j.at("zones").get<int>();
    }
    if (d.marks > 0) opt.taxonomy = MarkTaxonomy::generic(d.marks);
    if (d.zones > 0) opt.num_zones = d.zones;
    return parse_events(text, sidecar ? &*sidecar : nullptr, opt);
}

json full_sidecar(const Dataset& ds) {
    json j = sidecar_json(ds);
    j["marks"] = ds.taxonomy.labels();
    j["zones"] = ds.num_zones;
    return j;
}

MarkId resolve_mark(const MarkTaxonomy& tax, const std::string& s) {
    if (auto m = tax.find(s)) return *m;
    try {
        std::size_t used = 0;
        const int m = std::stoi(s, &used);
        if (used == s.size() && tax.valid(m)) return m;
    } catch (const std::exception&) {
    }
    throw ValidationFailure("unknown mark '" + s + "'");
}

// Graded SBeta ground truth on a generic taxonomy with two periods per game.
Dataset synthetic_dataset(int marks, int zones, int games, double length, std::uint64_t seed) {
    Dataset shape;
    shape.taxonomy = MarkTaxonomy::generic(marks);
    shape.num_zones = zones;
    shape.num_teams = 4;
    for (TeamId t = 1; t <= 4; ++t) shape.teams[t] = "Team " + std::to_string(t);
    const ModelSpec spec = ModelSpec::make(Family::SBeta, shape);

    Rng rng = make_rng(seed, {0x5B});
    auto simplex = [&](std::size_t k, double conc) {
        const std::vector<double> c(k, conc);
        return sample_dirichlet(c, rng);
    };
    const auto M = static_cast<std::size_t>(marks);
    ModelParams p;
    p.time = TimeParams::uniform(marks, 1.0, 1.0);
    for (std::size_t m = 0; m < M; ++m) {
        p.time.shape[m] = 0.8 + 1.25 * static_cast<double>(m) / static_cast<double>(std::max<std::size_t>(1, M - 1));
        p.time.rate[m] = 0.6 + 1.0 * static_cast<double>(M - 1 - m) / static_cast<double>(std::max<std::size_t>(1, M - 1));
    }
    p.zones = ZoneParams(zones, marks);
    for (int s = 0; s < marks * zones; ++s) {
        const auto row = simplex(static_cast<std::size_t>(zones), 4.0);
        for (ZoneId z = 1; z <= zones; ++z) p.zones.at(s, z) = row[static_cast<std::size_t>(z - 1)];
    }
    p.marks = mark_model_skeleton(spec);
    p.marks.exc.alpha = 1.0;
    p.marks.exc.beta = {0.3};
    p.marks.exc.delta = simplex(M, 3.0);
    for (std::size_t s = 0; s < M; ++s) {
        const auto row = simplex(M, 2.0);
        p.marks.exc.gamma.insert(p.marks.exc.gamma.end(), row.begin(), row.end());
    }

    Dataset ds = shape;
    for (int g = 0; g < games; ++g) {
        const TeamContext teams{g % 4 + 1, (g + 1) % 4 + 1};
        for (int period = 1; period <= 2; ++period) {
            Rng r = make_rng(seed, {static_cast<std::uint64_t>(g), static_cast<std::uint64_t>(period)});
            std::uniform_int_distribution<int> zone(1, zones), mark(1, marks);
            const MarkId m = mark(r);
            const Event opening{0.0, zone(r), m, ds.taxonomy.is_home(m) ? teams.home : teams.away};
            ds.periods.push_back(simulate_period(spec, p, g + 1, period, teams, opening, length, r));
        }
    }
    return ds;
}

// ---------------------------------------------------------------- fitted models

struct LoadedFit {
    fs::path dir;
    json config;
    DataOptions data_options;
    Dataset data;
    Dataset train;
    Dataset heldout;
    ModelSpec spec;
    PosteriorSamples samples;
};

LoadedFit load_fit(const std::string& dir) {
    LoadedFit f;
    f.dir = dir;
    const fs::path manifest = f.dir / "fit.manifest.json";
    try {
        f.config = json::parse(read_file(manifest)).at("config");
    } catch (const json::exception& e) {
        throw ValidationFailure("bad fit manifest " + manifest.string() + ": " + e.what());
    }
    f.data_options = DataOptions::from_json(f.config);
    f.data = load_dataset(f.data_options);
    const auto n_train = f.config.value("train_games", std::size_t{0});
    if (n_train > 0) {
        std::tie(f.train, f.heldout) = split_train_test(f.data, n_train);
    } else {
        f.train = f.data;
    }
    const Family family = parse_family(f.config.at("model").get<std::string>());
    std::optional<RuleSet> rules;
    if (const auto r = f.config.value("rules", std::string()); !r.empty()) rules = parse_rules(read_file(r));
    ModelOptions opt;
    opt.tie_home_away = f.config.value("tie_home_away", false);
    opt.sample_zones = f.config.value("sample_zones", false);
    const json& pr = f.config.at("priors");
    opt.priors.time.shape_rate = pr.at("time_shape_rate");
    opt.priors.time.rate_rate = pr.at("time_rate_rate");
    opt.priors.zone_conc = pr.at("zone_conc");
    opt.priors.delta_conc = pr.at("delta_conc");
    opt.priors.zone_delta_conc = pr.at("zone_delta_conc");
    opt.priors.beta_rate = pr.at("beta_rate");
    opt.priors.gamma_conc = pr.at("gamma_conc");
    opt.priors.sigma_alpha = pr.at("sigma_alpha");
    opt.priors.sigma_logit = pr.at("sigma_logit");
    opt.priors.fomc_conc = pr.at("fomc_conc");
    opt.priors.msthp_shape = pr.at("msthp_shape");
    opt.priors.msthp_rate = pr.at("msthp_rate");
    f.spec = ModelSpec::make(family, f.train, rules ? &*rules : nullptr, opt);
    f.samples = read_samples(read_file(f.dir / "samples.csv"));
    return f;
}

// At most `max_draws` draws, evenly spaced over the pooled chains (0: all).
std::vector<ModelParams> thinned_draws(const LoadedFit& f, std::size_t max_draws) {
    auto all = draws_as_params(f.spec, f.samples);
    if (max_draws == 0 || all.size() <= max_draws) return all;
    std::vector<ModelParams> out;
    out.reserve(max_draws);
    for (std::size_t i = 0; i < max_draws; ++i) out.push_back(std::move(all[i * all.size() / max_draws]));
    return out;
}

const GamePeriod& find_period(const Dataset& ds, std::optional<std::int64_t> game, int period) {
    for (const auto& p : ds.periods) {
        if ((!game || p.game_id == *game) && p.period == period) return p;
    }
    throw ValidationFailure("no period " + std::to_string(period) + (game ? " in game " + std::to_string(*game) : std::string()));
}

std::vector<int> interval_indicators(const GamePeriod& p, const std::set<MarkId>& targets, double interval) {
    std::vector<int> o;
    for (double s = 0.0; s < p.t_end; s += interval) {
        int hit = 0;
        for (const auto& e : p.events) {
            if (e.t >= s && e.t < s + interval && targets.count(e.mark)) hit = 1;
        }
        o.push_back(hit);
    }
    return o;
}

// ---------------------------------------------------------------- commands

struct IngestOptions {
    DataOptions data;
    bool synthetic{false};
    int games{20};
    double period_length{150.0};
    std::uint64_t seed{1};
};

int cmd_ingest(const IngestOptions& o, const Global& g) {
    json cfg = o.data.to_json();
    cfg["synthetic"] = o.synthetic;
    if (o.synthetic) {
        cfg["games"] = o.games;
        cfg["period_length"] = o.period_length;
    }
    Run run("ingest", cfg, g, o.synthetic ? std::optional<std::uint64_t>(o.seed) : std::nullopt);

    Dataset ds;
    if (o.synthetic) {
        if (o.games < 1 || !(o.period_length > 0.0)) throw ValidationFailure("synthetic data needs --games >= 1 and --period-length > 0");
        ds = synthetic_dataset(o.data.marks > 0 ? o.data.marks : 6, o.data.zones > 0 ? o.data.zones : kDefaultZones, o.games,
                               o.period_length, o.seed);
    } else {
        try {
            ds = load_dataset(o.data);
        } catch (const ParseError& e) {
            json report{{"status", "parse_error"}, {"line", e.line()}, {"message", e.what()}};
            run.write("ingest_report.json", report.dump(2) + '\n', false);
            run.summary() = report;
            std::cerr << "parse error: " << e.what() << '\n';
            run.finish(kExitValidation);
            return kExitValidation;
        }
    }

    const ValidationReport rep = validate(ds);
    json report;
    report["status"] = rep.ok() ? "ok" : "invalid";
    report["periods"] = json::array();
    for (const auto& p : rep.periods) report["periods"].push_back({{"key", p.key}, {"events", p.events}});
    report["zone_mark_counts"] = json::object();
    for (std::size_t m = 0; m < rep.zone_mark_counts.size(); ++m) {
        report["zone_mark_counts"][ds.taxonomy.label(static_cast<MarkId>(m + 1))] = rep.zone_mark_counts[m];
    }
    report["violations"] = rep.violations;
    run.write("ingest_report.json", report.dump(2) + '\n', false);
    run.write("events.csv", serialize_events(ds));
    run.write("sidecar.json", full_sidecar(ds).dump(2) + '\n', false);
    run.summary() = {{"periods", ds.periods.size()}, {"events", ds.num_events()}, {"violations", rep.violations.size()}};

    std::cout << ds.periods.size() << " periods, " << ds.num_events() << " events, " << rep.violations.size() << " violations\n";
    for (const auto& v : rep.violations) std::cerr << "violation: " << v << '\n';
    const int status = rep.ok() ? 0 : kExitValidation;
    run.finish(status);
    return status;
}

struct ScreenOptions {
    DataOptions data;
    int window{5};
    std::size_t n{50};
    std::string scope{"zone"};
};

int cmd_screen(const ScreenOptions& o, const Global& g) {
    json cfg = o.data.to_json();
    cfg["window"] = o.window;
    cfg["n"] = o.n;
    cfg["n_scope"] = o.scope;
    Run run("screen", cfg, g, std::nullopt);
    const Dataset ds = load_dataset(o.data);
    const RuleSet rs = select_rules(count_pair_support(ds, o.window), o.n, o.scope == "global" ? RetentionScope::Global : RetentionScope::PerZone);
    run.write("rules.csv", serialize_rules(rs));
    std::vector<std::size_t> per_zone(static_cast<std::size_t>(ds.num_zones), 0);
    for (const auto& r : rs.rules) ++per_zone[static_cast<std::size_t>(r.zone - 1)];
    run.summary() = {{"rules", rs.rules.size()}, {"per_zone", per_zone}};
    std::cout << rs.rules.size() << " rules retained\n";
    run.finish(0);
    return 0;
}

struct FitOptions {
    DataOptions data;
    std::string model{"sbeta"};
    std::string rules;
    bool tie_home_away{false};
    bool sample_zones{false};
    std::size_t train_games{0};
    int chains{4};
    int warmup{500};
    int iters{500};
    std::optional<std::uint64_t> seed;
    Priors priors;
};

json priors_json(const Priors& p) {
    return {{"time_shape_rate", p.time.shape_rate}, {"time_rate_rate", p.time.rate_rate}, {"zone_conc", p.zone_conc},
            {"delta_conc", p.delta_conc},           {"zone_delta_conc", p.zone_delta_conc}, {"beta_rate", p.beta_rate},
            {"gamma_conc", p.gamma_conc},           {"sigma_alpha", p.sigma_alpha},         {"sigma_logit", p.sigma_logit},
            {"fomc_conc", p.fomc_conc},             {"msthp_shape", p.msthp_shape},         {"msthp_rate", p.msthp_rate}};
}

int cmd_fit(const FitOptions& o, const Global& g) {
    if (!o.seed) throw UsageFailure("fit needs --seed");
    json cfg = o.data.to_json();
    cfg["model"] = o.model;
    cfg["rules"] = absolute(o.rules);
    cfg["tie_home_away"] = o.tie_home_away;
    cfg["sample_zones"] = o.sample_zones;
    cfg["train_games"] = o.train_games;
    cfg["chains"] = o.chains;
    cfg["warmup"] = o.warmup;
    cfg["iters"] = o.iters;
    cfg["priors"] = priors_json(o.priors);
    Run run("fit", cfg, g, o.seed);

    const Dataset all = load_dataset(o.data);
    const Dataset train = o.train_games > 0 ? split_train_test(all, o.train_games).first : all;
    const Family family = parse_family(o.model);
    std::optional<RuleSet> rules;
    if (is_matrix(family)) {
        if (o.rules.empty()) throw ValidationFailure("model " + o.model + " needs --rules from the screen command");
        rules = parse_rules(read_file(o.rules));
    }
    ModelOptions mo;
    mo.tie_home_away = o.tie_home_away;
    mo.sample_zones = o.sample_zones;
    mo.priors = o.priors;
    const Posterior post(ModelSpec::make(family, train, rules ? &*rules : nullptr, mo), train);

    HmcConfig hc;
    hc.chains = o.chains;
    hc.warmup = o.warmup;
    hc.iters = o.iters;
    hc.seed = *o.seed;
    hc.threads = g.threads;
    const PosteriorSamples s = fit(post, hc);
    const auto rows = summarize(s);

    std::ostringstream samples, summary, mean;
    write_samples(samples, s);
    write_summary(summary, rows);
    write_param_table(mean, post.codec(), s.posterior_mean());
    run.write("samples.csv", samples.str());
    run.write("summary.csv", summary.str());
    run.write("posterior_mean.csv", mean.str());

    double max_rhat = 0.0, min_neff = std::numeric_limits<double>::infinity();
    for (const auto& r : rows) {
        if (std::isfinite(r.rhat)) max_rhat = std::max(max_rhat, r.rhat);
        if (std::isfinite(r.neff)) min_neff = std::min(min_neff, r.neff);
    }
    json chains = json::array();
    for (const auto& c : s.stats) {
        chains.push_back({{"step_size", c.step_size}, {"mean_accept", c.mean_accept}, {"divergences", c.divergences}, {"leapfrog_steps", c.leapfrog_steps}});
    }
    run.summary() = {{"parameters", s.num_params()},
                     {"draws", s.num_draws()},
                     {"max_rhat", max_rhat},
                     {"min_neff", std::isfinite(min_neff) ? json(min_neff) : json(nullptr)},
                     {"divergences", s.total_divergences()},
                     {"chains", chains}};
    std::cout << s.num_params() << " parameters, " << s.num_draws() << " draws, max R-hat " << max_rhat << ", "
              << s.total_divergences() << " divergences\n";
    if (max_rhat >= 1.1) std::cerr << "warning: some parameters have R-hat >= 1.1\n";
    run.finish(0);
    return 0;
}

struct EvaluateOptions {
    std::vector<std::string> fits;
    DataOptions test;
    std::size_t max_draws{0};
};

int cmd_evaluate(const EvaluateOptions& o, const Global& g) {
    if (o.fits.empty()) throw UsageFailure("evaluate needs at least one --fit directory");
    json cfg;
    cfg["fits"] = json::array();
    for (const auto& f : o.fits) cfg["fits"].push_back(absolute(f));
    cfg["test"] = o.test.path.empty() ? json(nullptr) : o.test.to_json();
    cfg["max_draws"] = o.max_draws;
    Run run("evaluate", cfg, g, std::nullopt);

    std::vector<LoadedFit> fits(o.fits.size());
    for (std::size_t i = 0; i < fits.size(); ++i) fits[i] = load_fit(o.fits[i]);
    std::vector<LpdReport> reports(fits.size());
    std::vector<std::string> errors(fits.size());
    parallel_for(fits.size(), g.threads, [&](std::size_t i) {
        try {
            Dataset test;
            if (!o.test.path.empty()) {
                DataOptions d = o.test;
                if (d.marks == 0) d.marks = fits[i].data_options.marks;
                if (d.zones == 0) d.zones = fits[i].data_options.zones;
                test = load_dataset(d);
            } else if (!fits[i].heldout.periods.empty()) {
                test = fits[i].heldout;
            } else {
                throw ValidationFailure(fits[i].dir.string() + " has no held-out games; pass --data or fit with --train-games");
            }
            reports[i] = lpd(test, fits[i].spec, thinned_draws(fits[i], o.max_draws));
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });
    for (const auto& e : errors) {
        if (!e.empty()) throw ValidationFailure(e);
    }
    std::set<std::string> seen;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        if (!seen.insert(reports[i].model).second) reports[i].model += " [" + fits[i].dir.filename().string() + "]";
    }

    const auto ranked = compare(reports);
    std::ostringstream table;
    write_ranking(table, ranked);
    run.write("ranking.csv", table.str());
    json rows = json::array();
    for (std::size_t i = 0; i < reports.size(); ++i) {
        std::ostringstream c;
        write_contributions(c, reports[i]);
        run.write("contributions_" + std::to_string(i + 1) + "_" + std::string(family_key(fits[i].spec.family)) + ".csv", c.str());
        for (const auto& f : reports[i].flags) std::cerr << "flag: " << f << '\n';
    }
    for (const auto& r : ranked) rows.push_back({{"model", r.model}, {"d_par", r.num_params}, {"lpd", r.total}, {"flags", r.flags.size()}});
    run.summary()["ranking"] = rows;
    std::cout << table.str();
    run.finish(0);
    return 0;
}

struct BranchOptions {
    std::string fit;
    DataOptions data;
    std::optional<std::int64_t> game;
    std::optional<int> period;
    std::size_t max_draws{100};
    double min_prob{1e-3};
};

int cmd_branch(const BranchOptions& o, const Global& g) {
    if (o.fit.empty()) throw UsageFailure("branch needs --fit");
    json cfg{{"fit", absolute(o.fit)}, {"data", o.data.path.empty() ? json(nullptr) : o.data.to_json()},
             {"game", o.game ? json(*o.game) : json(nullptr)}, {"period", o.period ? json(*o.period) : json(nullptr)},
             {"max_draws", o.max_draws}, {"min_prob", o.min_prob}};
    Run run("branch", cfg, g, std::nullopt);

    const LoadedFit f = load_fit(o.fit);
    if (!is_excitation(f.spec.family)) {
        throw ValidationFailure("branching structure needs an excitation family, not " + std::string(family_key(f.spec.family)));
    }
    Dataset ds = f.data;
    if (!o.data.path.empty()) {
        DataOptions d = o.data;
        if (d.marks == 0) d.marks = f.data_options.marks;
        if (d.zones == 0) d.zones = f.data_options.zones;
        ds = load_dataset(d);
    }
    std::vector<const GamePeriod*> periods;
    for (const auto& p : ds.periods) {
        if ((!o.game || p.game_id == *o.game) && (!o.period || p.period == *o.period)) periods.push_back(&p);
    }
    if (periods.empty()) throw ValidationFailure("no periods match the requested game and period");
    const auto draws = thinned_draws(f, o.max_draws);

    std::vector<std::string> out(periods.size());
    parallel_for(periods.size(), g.threads, [&](std::size_t k) {
        const GamePeriod& p = *periods[k];
        const std::size_t n = p.events.size();
        // prob[i][j]: j < i is parent j, j == i is the background.
        std::vector<std::vector<double>> prob(n);
        for (std::size_t i = 1; i < n; ++i) prob[i].assign(i + 1, 0.0);
        const double w = 1.0 / static_cast<double>(draws.size());
        for (const auto& d : draws) {
            MarkState st(d.marks, {p.home_team, p.away_team});
            st.push(p.events[0]);
            for (std::size_t i = 1; i < n; ++i) {
                const Event& e = p.events[i];
                const Branching b = st.branching(std::span<const Event>(p.events).first(i), e.t, e.zone, e.mark);
                prob[i][i] += w * b.background;
                for (std::size_t j = 0; j < b.parents.size() && j < i; ++j) prob[i][j] += w * b.parents[j];
                st.push(e);
            }
        }
        std::ostringstream os;
        for (std::size_t i = 1; i < n; ++i) {
            const Event& e = p.events[i];
            const std::string lead = std::to_string(p.game_id) + ',' + std::to_string(p.period) + ',' + std::to_string(i + 1) + ',' +
                                     detail::format_double(e.t) + ',' + ds.taxonomy.label(e.mark) + ',';
            os << lead << "background,,," << detail::format_double(prob[i][i]) << '\n';
            for (std::size_t j = 0; j < i; ++j) {
                if (prob[i][j] < o.min_prob) continue;
                os << lead << "event," << j + 1 << ',' << ds.taxonomy.label(p.events[j].mark) << ',' << detail::format_double(prob[i][j]) << '\n';
            }
        }
        out[k] = os.str();
    });
    std::string body = "game,period,index,time,mark,source,source_index,source_mark,probability\n";
    for (const auto& s : out) body += s;
    run.write("branching.csv", body);
    run.summary() = {{"periods", periods.size()}, {"draws", draws.size()}};
    std::cout << "branching tables for " << periods.size() << " periods from " << draws.size() << " draws\n";
    run.finish(0);
    return 0;
}

struct SimulateOptions {
    std::string fit;
    DataOptions data;
    std::optional<std::int64_t> game;
    int period{1};
    std::vector<std::string> targets;
    int rollouts{100};
    double interval{60.0};
    double horizon{0.0};
    std::size_t max_draws{100};
    int ma_window{10};
    std::optional<double> ma_prior;
    std::optional<std::uint64_t> seed;
};

int cmd_simulate(const SimulateOptions& o, const Global& g) {
    if (!o.seed) throw UsageFailure("simulate needs --seed");
    if (o.fit.empty()) throw UsageFailure("simulate needs --fit");
    if (o.targets.empty()) throw UsageFailure("simulate needs --target-marks");
    json cfg{{"fit", absolute(o.fit)},
             {"data", o.data.path.empty() ? json(nullptr) : o.data.to_json()},
             {"game", o.game ? json(*o.game) : json(nullptr)},
             {"period", o.period},
             {"target_marks", o.targets},
             {"rollouts", o.rollouts},
             {"interval", o.interval},
             {"horizon", o.horizon},
             {"max_draws", o.max_draws},
             {"ma_window", o.ma_window},
             {"ma_prior", o.ma_prior ? json(*o.ma_prior) : json(nullptr)}};
    Run run("simulate", cfg, g, o.seed);

    const LoadedFit f = load_fit(o.fit);
    Dataset ds = f.heldout.periods.empty() ? f.data : f.heldout;
    if (!o.data.path.empty()) {
        DataOptions d = o.data;
        if (d.marks == 0) d.marks = f.data_options.marks;
        if (d.zones == 0) d.zones = f.data_options.zones;
        ds = load_dataset(d);
    }
    std::set<MarkId> targets;
    for (const auto& t : o.targets) targets.insert(resolve_mark(ds.taxonomy, t));
    const GamePeriod& period = find_period(ds, o.game, o.period);

    SimConfig sc;
    sc.rollouts = o.rollouts;
    sc.interval = o.interval;
    sc.horizon = o.horizon;
    sc.seed = *o.seed;
    sc.threads = g.threads;
    PredictionSeries s = interval_probabilities(f.spec, thinned_draws(f, o.max_draws), period, targets, sc);

    double prior = 0.0;
    if (o.ma_prior) {
        prior = *o.ma_prior;
    } else {
        double hits = 0.0, count = 0.0;
        for (const auto& p : f.train.periods) {
            for (int v : interval_indicators(p, targets, o.interval)) {
                hits += v;
                count += 1.0;
            }
        }
        prior = count > 0.0 ? hits / count : 0.0;
    }
    s.p_baseline = moving_average_baseline(s.observed, o.ma_window, prior);

    std::ostringstream os;
    write_prediction_series(os, s);
    run.write("prediction.csv", os.str());
    json summary{{"game", period.game_id}, {"period", period.period}, {"intervals", s.start.size()}, {"ma_prior", prior}};
    const bool both = std::count(s.observed.begin(), s.observed.end(), 1) > 0 && std::count(s.observed.begin(), s.observed.end(), 0) > 0;
    if (both) {
        summary["auc_model"] = roc_auc(s.p_model, s.observed);
        summary["auc_ma"] = roc_auc(s.p_baseline, s.observed);
    }
    run.summary() = summary;
    std::cout << s.start.size() << " intervals for period " << period.key();
    if (both) std::cout << ", AUC model " << summary["auc_model"].get<double>() << ", AUC MA " << summary["auc_ma"].get<double>();
    std::cout << '\n';
    run.finish(0);
    return 0;
}

struct DiagnoseOptions {
    DataOptions data;
    std::vector<std::string> only;
    double grid_step{10.0};
    double grid_max{100.0};
    int starts{8};
    std::uint64_t seed{1};
};

int cmd_diagnose(const DiagnoseOptions& o, const Global& g) {
    if (!(o.grid_step > 0.0) || o.grid_max < o.grid_step) throw ValidationFailure("need 0 < --grid-step <= --grid-max");
    json cfg = o.data.to_json();
    cfg["only"] = o.only;
    cfg["grid_step"] = o.grid_step;
    cfg["grid_max"] = o.grid_max;
    cfg["starts"] = o.starts;
    Run run("diagnose", cfg, g, o.seed);

    const Dataset ds = load_dataset(o.data);
    std::set<MarkId> keep;
    for (const auto& s : o.only) keep.insert(resolve_mark(ds.taxonomy, s));

    // Periods laid end to end; inter-arrival times stay within periods.
    std::vector<double> times, gaps;
    double offset = 0.0;
    for (const auto& p : ds.periods) {
        std::optional<double> prev;
        for (const auto& e : p.events) {
            if (!keep.empty() && !keep.count(e.mark)) continue;
            times.push_back(offset + e.t);
            if (prev) gaps.push_back(e.t - *prev);
            prev = e.t;
        }
        offset += std::max(p.t_end, p.events.empty() ? 0.0 : p.events.back().t);
    }
    const double T = offset;
    if (times.size() < 2 || gaps.empty() || !(T > 0.0)) throw ValidationFailure("diagnostics need at least two events");
    for (double& dt : gaps) dt = std::max(dt, 1e-9);

    std::vector<double> grid;
    for (double t = o.grid_step; t <= o.grid_max + 1e-9; t += o.grid_step) grid.push_back(t);

    const double rate = fit_poisson(times, T);
    const Hawkes1DFit hawkes = fit_hawkes1d(times, T, o.starts);
    Rng rng = make_rng(o.seed, {0xD1});
    std::vector<double> poisson_times;
    std::exponential_distribution<double> gap(rate);
    for (double t = gap(rng); t < T; t += gap(rng)) poisson_times.push_back(t);
    const auto hawkes_times = hawkes1d_simulate(hawkes.params, T, rng);

    std::ostringstream k;
    k << "t,khat_minus_2t,source\n";
    auto emit_k = [&](const std::vector<double>& ts, const char* source) {
        if (ts.size() < 2) return;
        const auto kh = k_function(ts, T, grid);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            k << detail::format_double(grid[i]) << ',' << detail::format_double(kh[i] - 2.0 * grid[i]) << ',' << source << '\n';
        }
    };
    emit_k(times, "observed");
    emit_k(poisson_times, "poisson");
    emit_k(hawkes_times, "hawkes");
    run.write("kfunction.csv", k.str());

    const GammaFit gf = fit_gamma(gaps);
    const boost::math::gamma_distribution<double> gd(gf.shape, 1.0 / gf.rate);
    const double mean_gap = mean(gaps);
    std::ostringstream e;
    e << "dt,ecdf,source\n";
    const auto emp = ecdf(gaps);
    for (const auto& [x, F] : emp) e << detail::format_double(x) << ',' << detail::format_double(F) << ",observed\n";
    for (const auto& [x, F] : emp) e << detail::format_double(x) << ',' << detail::format_double(1.0 - std::exp(-x / mean_gap)) << ",exponential\n";
    for (const auto& [x, F] : emp) e << detail::format_double(x) << ',' << detail::format_double(boost::math::cdf(gd, x)) << ",gamma\n";
    run.write("interarrival_ecdf.csv", e.str());

    run.summary() = {{"events", times.size()},
                     {"T", T},
                     {"poisson_rate", rate},
                     {"hawkes", {{"mu", hawkes.params.mu}, {"eps", hawkes.params.eps}, {"beta", hawkes.params.beta}, {"log_lik", hawkes.log_lik}, {"converged", hawkes.converged}}},
                     {"gamma", {{"shape", gf.shape}, {"rate", gf.rate}}}};
    std::cout << times.size() << " events over " << T << " s; Hawkes eps " << hawkes.params.eps << ", gamma shape " << gf.shape << '\n';
    run.finish(0);
    return 0;
}

void add_prior_options(CLI::App* c, Priors& p) {
    c->add_option("--prior-time-shape-rate", p.time.shape_rate, "exponential rate on the gap shapes")->capture_default_str();
    c->add_option("--prior-time-rate-rate", p.time.rate_rate, "exponential rate on the gap rates")->capture_default_str();
    c->add_option("--prior-zone-conc", p.zone_conc, "Dirichlet concentration of zone rows")->capture_default_str();
    c->add_option("--prior-delta-conc", p.delta_conc, "Dirichlet concentration of the background")->capture_default_str();
    c->add_option("--prior-zone-delta-conc", p.zone_delta_conc, "Dirichlet concentration of per-zone backgrounds")->capture_default_str();
    c->add_option("--prior-beta-rate", p.beta_rate, "exponential rate on decays")->capture_default_str();
    c->add_option("--prior-gamma-conc", p.gamma_conc, "Dirichlet concentration of excitation rows")->capture_default_str();
    c->add_option("--prior-sigma-alpha", p.sigma_alpha, "normal scale of alpha")->capture_default_str();
    c->add_option("--prior-sigma-logit", p.sigma_logit, "normal scale of conversion logits")->capture_default_str();
    c->add_option("--prior-fomc-conc", p.fomc_conc, "Dirichlet concentration of chain rows")->capture_default_str();
    c->add_option("--prior-msthp-shape", p.msthp_shape, "gamma shape of Poisson rates")->capture_default_str();
    c->add_option("--prior-msthp-rate", p.msthp_rate, "gamma rate of Poisson rates")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flexpoint: marked spatio-temporal point processes for event sequences"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);
    app.fallthrough();
    app.config_formatter(std::make_shared<JsonConfig>());
    app.set_config("--config", "", "JSON config file; command-line flags win");

    Global g;
    app.add_option("--out", g.out, "output directory")->capture_default_str();
    app.add_option("--threads", g.threads, "worker cap (0: all cores)")->envname("FLEXPOINT_THREADS")->check(CLI::NonNegativeNumber);

    std::vector<std::string> families;
    for (Family f : {Family::SBeta, Family::VBeta, Family::MBeta, Family::MBetaA, Family::Fomc, Family::Msthp}) {
        families.emplace_back(family_key(f));
    }

    IngestOptions ingest;
    auto* c_ingest = app.add_subcommand("ingest", "parse, validate and normalise an event CSV (or write a synthetic one)");
    add_data_options(c_ingest, ingest.data);
    c_ingest->add_flag("--synthetic", ingest.synthetic, "generate a synthetic fixture instead of reading --data");
    c_ingest->add_option("--games", ingest.games, "synthetic games (two periods each)")->capture_default_str();
    c_ingest->add_option("--period-length", ingest.period_length, "synthetic period length in seconds")->capture_default_str();
    c_ingest->add_option("--seed", ingest.seed, "synthetic seed")->capture_default_str();

    ScreenOptions screen;
    auto* c_screen = app.add_subcommand("screen", "select excitation pairs for the matrix families");
    add_data_options(c_screen, screen.data);
    c_screen->add_option("--window", screen.window, "predecessor window W")->check(CLI::PositiveNumber)->capture_default_str();
    c_screen->add_option("--n", screen.n, "pairs retained N")->check(CLI::PositiveNumber)->capture_default_str();
    c_screen->add_option("--n-scope", screen.scope, "N per zone or overall")->check(CLI::IsMember({"zone", "global"}))->capture_default_str();

    FitOptions fitopt;
    auto* c_fit = app.add_subcommand("fit", "sample the posterior of one model family");
    add_data_options(c_fit, fitopt.data);
    c_fit->add_option("--model", fitopt.model, "model family")->check(CLI::IsMember(families))->capture_default_str();
    c_fit->add_option("--rules", fitopt.rules, "rule table from screen (matrix families)");
    c_fit->add_flag("--tie-home-away", fitopt.tie_home_away, "share background rates between mirrored marks");
    c_fit->add_flag("--sample-zones", fitopt.sample_zones, "sample the zone block by HMC");
    c_fit->add_option("--train-games", fitopt.train_games, "fit on the first K games only (0: all)")->capture_default_str();
    c_fit->add_option("--chains", fitopt.chains)->check(CLI::PositiveNumber)->capture_default_str();
    c_fit->add_option("--warmup", fitopt.warmup)->check(CLI::NonNegativeNumber)->capture_default_str();
    c_fit->add_option("--iters", fitopt.iters)->check(CLI::PositiveNumber)->capture_default_str();
    c_fit->add_option("--seed", fitopt.seed, "sampler seed (required)");
    add_prior_options(c_fit, fitopt.priors);

    EvaluateOptions eval;
    auto* c_eval = app.add_subcommand("evaluate", "rank fitted models by log predictive density");
    c_eval->add_option("--fit", eval.fits, "fit output directory (repeatable)");
    add_data_options(c_eval, eval.test, "test event CSV (default: games held out of each fit)");
    c_eval->add_option("--max-draws", eval.max_draws, "thin to at most this many draws (0: all)")->capture_default_str();

    BranchOptions branch;
    auto* c_branch = app.add_subcommand("branch", "posterior branching probabilities per event");
    c_branch->add_option("--fit", branch.fit, "fit output directory");
    add_data_options(c_branch, branch.data, "event CSV (default: the fit's data)");
    c_branch->add_option("--game", branch.game, "only this game");
    c_branch->add_option("--period", branch.period, "only this period");
    c_branch->add_option("--max-draws", branch.max_draws)->capture_default_str();
    c_branch->add_option("--min-prob", branch.min_prob, "omit parent rows below this probability")->capture_default_str();

    SimulateOptions sim;
    auto* c_sim = app.add_subcommand("simulate", "interval forecasts of target marks for one period");
    c_sim->add_option("--fit", sim.fit, "fit output directory");
    add_data_options(c_sim, sim.data, "event CSV (default: the fit's held-out games, else its data)");
    c_sim->add_option("--game", sim.game, "game id (default: first in the data)");
    c_sim->add_option("--period", sim.period)->capture_default_str();
    c_sim->add_option("--target-marks", sim.targets, "mark labels or numbers")->delimiter(',');
    c_sim->add_option("--rollouts", sim.rollouts, "simulations per draw Q")->check(CLI::PositiveNumber)->capture_default_str();
    c_sim->add_option("--interval", sim.interval, "interval length in seconds")->capture_default_str();
    c_sim->add_option("--horizon", sim.horizon, "forecast horizon (0: period end)")->capture_default_str();
    c_sim->add_option("--max-draws", sim.max_draws, "posterior draws R")->capture_default_str();
    c_sim->add_option("--ma-window", sim.ma_window, "moving-average baseline window")->check(CLI::PositiveNumber)->capture_default_str();
    c_sim->add_option("--ma-prior", sim.ma_prior, "baseline before any interval (default: training rate)");
    c_sim->add_option("--seed", sim.seed, "simulation seed (required)");

    DiagnoseOptions diag;
    auto* c_diag = app.add_subcommand("diagnose", "clustering diagnostics: K-function and inter-arrival fits");
    add_data_options(c_diag, diag.data);
    c_diag->add_option("--only", diag.only, "restrict to these marks")->delimiter(',');
    c_diag->add_option("--grid-step", diag.grid_step)->capture_default_str();
    c_diag->add_option("--grid-max", diag.grid_max)->capture_default_str();
    c_diag->add_option("--starts", diag.starts, "Hawkes multi-start count")->check(CLI::PositiveNumber)->capture_default_str();
    c_diag->add_option("--seed", diag.seed)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::FileError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (c_ingest->parsed()) return cmd_ingest(ingest, g);
        if (c_screen->parsed()) return cmd_screen(screen, g);
        if (c_fit->parsed()) return cmd_fit(fitopt, g);
        if (c_eval->parsed()) return cmd_evaluate(eval, g);
        if (c_branch->parsed()) return cmd_branch(branch, g);
        if (c_sim->parsed()) return cmd_simulate(sim, g);
        if (c_diag->parsed()) return cmd_diagnose(diag, g);
    } catch (const UsageFailure& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    } catch (const ValidationFailure& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}
