// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include "ddns/connmap.hpp"
#include "ddns/error.hpp"
#include "ddns/metrics.hpp"
#include "ddns/model_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <ostream>
#include <set>

namespace ddns::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Config parsing ---------------------------------------------------------------

void check_keys(const json &j, std::initializer_list<const char *> allowed, const std::string &where)
{
    if (!j.is_object())
        throw ConfigError("config: '" + where + "' must be an object");
    for (const auto &[key, value] : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char *a) { return key == a; }))
            throw ConfigError("config: unknown key '" + where + (where.empty() ? "" : ".") + key + "'");
    }
}

template <class T> void read_opt(const json &j, const char *key, T &target)
{
    if (j.contains(key))
        target = j.at(key).get<T>();
}

template <class T> void read_opt(const json &j, const char *key, std::optional<T> &target)
{
    if (j.contains(key))
        target = j.at(key).get<T>();
}

Direction config_direction(const std::string &s)
{
    try {
        return parse_direction(s);
    } catch (const DataError &e) {
        throw ConfigError(e.what());
    }
}

DelayMode parse_delay_mode(const std::string &s)
{
    if (s == "half")
        return DelayMode::HalfInterval;
    if (s == "full")
        return DelayMode::FullInterval;
    throw ConfigError("delay_mode must be 'half' or 'full', got '" + s + "'");
}

RateAggregation parse_rate_aggregation(const std::string &s)
{
    if (s == "per_transmission")
        return RateAggregation::PerTransmission;
    if (s == "byte_weighted")
        return RateAggregation::ByteWeighted;
    throw ConfigError("rate_aggregation must be 'per_transmission' or 'byte_weighted', got '" + s + "'");
}

ProjectConfig parse_config_json(const json &j, const fs::path &base)
{
    check_keys(j,
               {"seed", "jobs", "out", "traces", "models", "mno", "direction", "origin", "synthetic", "forest",
                "cv_folds", "derivation", "map", "scheme", "sweep", "engine", "bench"},
               "");
    auto resolve = [&](const std::string &p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };

    ProjectConfig c;
    read_opt(j, "seed", c.seed);
    read_opt(j, "jobs", c.jobs);
    if (j.contains("out"))
        c.out = resolve(j["out"].get<std::string>());
    if (j.contains("traces"))
        for (const auto &p : j["traces"])
            c.traces.push_back(resolve(p.get<std::string>()));
    if (j.contains("models"))
        for (const auto &[key, p] : j["models"].items())
            c.models[key] = resolve(p.get<std::string>());
    read_opt(j, "mno", c.mno);
    if (j.contains("direction"))
        c.direction = config_direction(j["direction"].get<std::string>());
    if (j.contains("origin")) {
        const auto o = j["origin"].get<std::vector<double>>();
        if (o.size() != 2)
            throw ConfigError("config: origin must be [lat, lon]");
        c.origin = GeoPoint{o[0], o[1]};
    }

    if (j.contains("synthetic")) {
        const auto &s = j["synthetic"];
        check_keys(s,
                   {"n_samples", "sample_interval_s", "noise_std", "truth", "slope", "intercept", "step_at", "low",
                    "high", "min_rate", "speed_kmh", "payload_min_mb", "payload_max_mb", "n_enb", "labeled_fraction",
                    "scenario", "traces"},
                   "synthetic");
        auto &sc = c.synthetic;
        read_opt(s, "n_samples", sc.n_samples);
        read_opt(s, "sample_interval_s", sc.sample_interval_s);
        read_opt(s, "noise_std", sc.noise_std);
        if (s.contains("truth"))
            sc.truth = parse_ground_truth(s["truth"].get<std::string>());
        read_opt(s, "slope", sc.slope);
        read_opt(s, "intercept", sc.intercept);
        read_opt(s, "step_at", sc.step_at);
        read_opt(s, "low", sc.low);
        read_opt(s, "high", sc.high);
        read_opt(s, "min_rate", sc.min_rate);
        read_opt(s, "speed_kmh", sc.speed_kmh);
        read_opt(s, "payload_min_mb", sc.payload_min_mb);
        read_opt(s, "payload_max_mb", sc.payload_max_mb);
        read_opt(s, "n_enb", sc.n_enb);
        read_opt(s, "labeled_fraction", sc.labeled_fraction);
        read_opt(s, "scenario", sc.scenario);
        read_opt(s, "traces", c.synthetic_traces);
    }
    if (j.contains("forest")) {
        const auto &f = j["forest"];
        check_keys(f, {"n_trees", "max_depth", "min_leaf", "max_features", "bootstrap"}, "forest");
        read_opt(f, "n_trees", c.forest.n_trees);
        read_opt(f, "max_depth", c.forest.max_depth);
        read_opt(f, "min_leaf", c.forest.min_leaf);
        read_opt(f, "max_features", c.forest.max_features);
        read_opt(f, "bootstrap", c.forest.bootstrap);
    }
    read_opt(j, "cv_folds", c.cv_folds);
    if (j.contains("derivation")) {
        const auto &d = j["derivation"];
        check_keys(d, {"refine", "max_inducing", "length_scale", "signal_variance", "noise_variance"}, "derivation");
        read_opt(d, "refine", c.kernel.refine);
        read_opt(d, "max_inducing", c.kernel.max_inducing);
        read_opt(d, "length_scale", c.kernel.length_scale);
        read_opt(d, "signal_variance", c.kernel.signal_variance);
        read_opt(d, "noise_variance", c.kernel.noise_variance);
    }
    if (j.contains("map")) {
        const auto &m = j["map"];
        check_keys(m, {"path", "cell_size", "payload_mb"}, "map");
        if (m.contains("path"))
            c.map = resolve(m["path"].get<std::string>());
        read_opt(m, "cell_size", c.map_cell_size);
        read_opt(m, "payload_mb", c.map_payload_mb);
    }
    if (j.contains("scheme")) {
        const auto &s = j["scheme"];
        check_keys(s,
                   {"kind", "phi_min", "phi_max", "alpha", "gamma", "tau", "t_min", "t_max", "evaluation_rate",
                    "period"},
                   "scheme");
        if (s.contains("kind"))
            c.scheme = parse_scheme_kind(s["kind"].get<std::string>());
        auto &o = c.scheme_overrides;
        read_opt(s, "phi_min", o.phi_min);
        read_opt(s, "phi_max", o.phi_max);
        read_opt(s, "alpha", o.alpha);
        read_opt(s, "gamma", o.gamma);
        read_opt(s, "tau", o.tau);
        read_opt(s, "t_min", o.t_min);
        read_opt(s, "t_max", o.t_max);
        read_opt(s, "evaluation_rate", o.evaluation_rate);
        read_opt(s, "period", o.period);
    }
    if (j.contains("sweep")) {
        const auto &s = j["sweep"];
        check_keys(s, {"phi_max", "schemes", "seeds"}, "sweep");
        read_opt(s, "phi_max", c.sweep_phi_max);
        if (s.contains("schemes"))
            for (const auto &k : s["schemes"])
                c.sweep_schemes.push_back(parse_scheme_kind(k.get<std::string>()));
        read_opt(s, "seeds", c.sweep_seeds);
    }
    if (j.contains("engine")) {
        const auto &e = j["engine"];
        check_keys(e, {"source_rate_kbps", "delay_mode", "rate_aggregation"}, "engine");
        read_opt(e, "source_rate_kbps", c.source_rate_kbps);
        if (e.contains("delay_mode"))
            c.delay_mode = parse_delay_mode(e["delay_mode"].get<std::string>());
        if (e.contains("rate_aggregation"))
            c.rate_aggregation = parse_rate_aggregation(e["rate_aggregation"].get<std::string>());
    }
    if (j.contains("bench")) {
        check_keys(j["bench"], {"repetitions"}, "bench");
        read_opt(j["bench"], "repetitions", c.bench_repetitions);
    }
    return c;
}

ProjectConfig parse_config_text(std::string_view text, const fs::path &base)
{
    try {
        return parse_config_json(json::parse(text), base);
    } catch (const json::exception &e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

// Flags ------------------------------------------------------------------------

struct Flags
{
    std::string config;
    std::uint64_t seed = 0;
    std::size_t jobs = 0;
    std::string mno, direction, scheme, phi_max, out, model, map, by = "mno";
    std::size_t repetitions = 0, seeds = 0, n_traces = 0;
    std::vector<std::string> inputs;

    // Presence of numeric flags, read from the parsed subcommand.
    bool has_seed = false, has_jobs = false, has_repetitions = false, has_seeds = false, has_n_traces = false;
};

std::vector<std::string> split_list(const std::string &s)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto end = s.find(',', start);
        if (end == std::string::npos)
            end = s.size();
        std::string item = s.substr(start, end - start);
        item.erase(0, item.find_first_not_of(' '));
        item.erase(item.find_last_not_of(' ') + 1);
        if (!item.empty())
            out.push_back(item);
        start = end + 1;
    }
    return out;
}

std::vector<double> parse_number_list(const std::string &s)
{
    std::vector<double> out;
    for (const auto &item : split_list(s)) {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc() || ptr != item.data() + item.size())
            throw ConfigError("--phi-max: '" + item + "' is not a number");
        out.push_back(v);
    }
    if (out.empty())
        throw ConfigError("--phi-max is empty");
    return out;
}

ProjectConfig resolve_config(const Flags &f)
{
    ProjectConfig c;
    if (!f.config.empty()) {
        const fs::path p(f.config);
        if (!fs::exists(p))
            throw ConfigError("config file '" + f.config + "' not found");
        c = parse_config_text(read_text_file(p), p.parent_path());
    }
    if (f.has_seed)
        c.seed = f.seed;
    if (f.has_jobs)
        c.jobs = f.jobs;
    if (!f.out.empty())
        c.out = f.out;
    if (!f.mno.empty())
        c.mno = f.mno;
    if (!f.direction.empty())
        c.direction = config_direction(f.direction);
    if (!f.map.empty())
        c.map = f.map;
    c.forest.jobs = c.jobs;
    return c;
}

// Helpers ----------------------------------------------------------------------

struct Loaded
{
    std::vector<IngestResult> traces;
    GeoPoint origin;
};

/// Ingests all traces into one planar frame.
Loaded load_traces(const std::vector<fs::path> &paths, std::optional<GeoPoint> origin)
{
    if (paths.empty())
        throw ConfigError("no input traces; pass paths or set 'traces' in the config");
    Loaded out;
    std::set<std::string> ids;
    for (const auto &p : paths) {
        CsvSchema schema;
        schema.origin = origin;
        auto r = ingest_trace(p, schema);
        if (!origin)
            origin = r.trace.origin;
        if (!ids.insert(r.trace.id).second)
            throw DataError("duplicate trace id '" + r.trace.id + "'");
        out.traces.push_back(std::move(r));
    }
    out.origin = *origin;
    return out;
}

std::vector<fs::path> input_paths(const Flags &f, const ProjectConfig &c)
{
    if (!f.inputs.empty())
        return {f.inputs.begin(), f.inputs.end()};
    return c.traces;
}

/// The single value of a trace attribute, or the explicit selection.
template <class T, class Get>
T pick_single(const std::optional<T> &explicit_value, const std::vector<IngestResult> &traces, Get get,
              const char *what)
{
    if (explicit_value)
        return *explicit_value;
    std::set<T> seen;
    for (const auto &t : traces)
        seen.insert(get(t.trace));
    if (seen.size() != 1)
        throw ConfigError(std::string("inputs contain several ") + what + " values; select one with --" + what);
    return *seen.begin();
}

std::string file_tag(const std::string &mno, Direction d) { return mno + "_" + to_string(d); }

fs::path default_model_path(const ProjectConfig &c, const std::string &mno, Direction d)
{
    return c.out / ("model_" + file_tag(mno, d) + ".json");
}

ModelBundle resolve_model(const Flags &f, const ProjectConfig &c, const std::string &mno, Direction d)
{
    fs::path path;
    if (!f.model.empty()) {
        path = f.model;
    } else if (auto it = c.models.find(model_key(mno, d)); it != c.models.end()) {
        path = it->second;
    } else {
        path = default_model_path(c, mno, d);
        if (!fs::exists(path))
            throw ModelError("no model bound for " + model_key(mno, d) + "; run 'train' or pass --model");
    }
    if (!fs::exists(path))
        throw ModelError("model document '" + path.string() + "' not found");
    auto bundle = load_model(path);
    const auto &meta = bundle.forest.metadata();
    if (meta.mno != mno || meta.direction != d)
        throw ModelError("model '" + path.string() + "' is for " + model_key(meta.mno, meta.direction) + ", not " +
                         model_key(mno, d));
    return bundle;
}

std::optional<ConnectivityMap> resolve_map(const ProjectConfig &c)
{
    fs::path path = c.map ? *c.map : c.out / "map.json";
    if (!fs::exists(path)) {
        if (c.map)
            throw ModelError("map document '" + path.string() + "' not found");
        return std::nullopt;
    }
    return load_map(path);
}

SchemeConfig build_scheme(const ProjectConfig &c, SchemeKind kind, const std::string &mno, Direction d,
                          std::optional<double> phi_max)
{
    const auto &o = c.scheme_overrides;
    SchemeConfig s;
    if (uses_predicted_rate(kind) && !o.phi_max && !phi_max)
        s = default_scheme(kind, mno, d);
    else
        s = default_scheme(kind, "A", d);
    s.kind = kind;
    auto apply = [](double &t, const std::optional<double> &v) {
        if (v)
            t = *v;
    };
    apply(s.phi_min, o.phi_min);
    apply(s.phi_max, o.phi_max);
    apply(s.alpha, o.alpha);
    apply(s.gamma, o.gamma);
    apply(s.tau, o.tau);
    apply(s.t_min, o.t_min);
    apply(s.t_max, o.t_max);
    apply(s.evaluation_rate, o.evaluation_rate);
    apply(s.period, o.period);
    apply(s.phi_max, phi_max);
    s.validate();
    return s;
}

RunConfig base_run(const ProjectConfig &c, SchemeConfig scheme, const ModelBundle &bundle,
                   const std::optional<ConnectivityMap> &map)
{
    RunConfig r;
    r.scheme = scheme;
    r.source_rate_kbps = c.source_rate_kbps;
    r.seed = c.seed;
    r.delay_mode = c.delay_mode;
    r.rate_aggregation = c.rate_aggregation;
    r.models.forest = std::make_shared<RegressionForest>(bundle.forest);
    r.models.derivation = std::make_shared<DerivationModel>(bundle.derivation);
    if (map)
        r.models.map = std::make_shared<ConnectivityMap>(*map);
    return r;
}

json optional_json(const std::optional<double> &v) { return v ? json(*v) : json(nullptr); }

struct Outputs
{
    const ProjectConfig &cfg;
    std::vector<std::string> written;

    void write(const std::string &name, std::string_view text)
    {
        const fs::path p = cfg.out / name;
        write_text_file(p, text);
        written.push_back(p.string());
    }
};

void report(std::ostream &out, const std::string &command, const Outputs &o, json extra = json::object())
{
    extra["command"] = command;
    extra["outputs"] = o.written;
    out << extra.dump() << '\n';
}

// Commands ---------------------------------------------------------------------

void cmd_synth(const Flags &f, const ProjectConfig &c, std::ostream &out)
{
    SyntheticConfig sc = c.synthetic;
    if (c.mno)
        sc.mno = *c.mno;
    if (c.direction)
        sc.direction = *c.direction;
    const std::size_t n = f.has_n_traces ? f.n_traces : c.synthetic_traces;
    if (n == 0)
        throw ConfigError("synth needs at least one trace");
    Outputs o{c, {}};
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = generate_synthetic_scenario(sc, mix_seed({c.seed, i}));
        o.write(r.trace.id + ".csv", format_trace_csv(r.trace, r.records));
    }
    report(out, "synth", o);
}

void cmd_ingest(const Flags &f, const ProjectConfig &c, std::ostream &out)
{
    const auto loaded = load_traces(input_paths(f, c), c.origin);
    Outputs o{c, {}};
    json summary = json::array();
    for (const auto &r : loaded.traces) {
        o.write("traces/" + r.trace.id + ".csv", format_trace_csv(r.trace, r.records));
        summary.push_back({{"id", r.trace.id},
                           {"mno", r.trace.mno},
                           {"direction", to_string(r.trace.direction)},
                           {"samples", r.trace.samples.size()},
                           {"labeled", r.records.size()},
                           {"duration_s", r.trace.end_time() - r.trace.start_time()}});
    }
    o.write("ingest_summary.json", json{{"origin", {loaded.origin.lat, loaded.origin.lon}}, {"traces", summary}}.dump(2) + '\n');
    report(out, "ingest", o);
}

void cmd_train(const Flags &f, const ProjectConfig &c, std::ostream &out)
{
    const auto loaded = load_traces(input_paths(f, c), c.origin);
    const auto mno = pick_single<std::string>(c.mno, loaded.traces, [](const Trace &t) { return t.mno; }, "mno");
    const auto dir = pick_single<Direction>(c.direction, loaded.traces, [](const Trace &t) { return t.direction; },
                                            "direction");

    std::vector<TransmissionRecord> records;
    for (const auto &t : loaded.traces)
        if (t.trace.mno == mno && t.trace.direction == dir)
            records.insert(records.end(), t.records.begin(), t.records.end());
    if (records.empty())
        throw DataError("no labeled transmissions for " + model_key(mno, dir));
    const auto rows = to_rows(records);

    const auto cv = cross_validate(rows, c.cv_folds, forest_trainer(c.forest), c.seed);
    auto forest = train_forest(rows, c.forest, c.seed);
    forest.metadata().mno = mno;
    forest.metadata().direction = dir;
    // Out-of-fold pairs carry the generalization error the derivation model should reproduce.
    auto derivation = fit_derivation(cv.residuals, c.kernel);

    ModelBundle bundle{std::move(forest), std::move(derivation), TrainingSummary{}};
    bundle.summary->folds = c.cv_folds;
    bundle.summary->cv_r_squared = cv.r_squared;
    bundle.summary->mdi = mdi_importance(bundle.forest);

    Outputs o{c, {}};
    o.write("model_" + file_tag(mno, dir) + ".json", serialize_model(bundle));

    json mdi = json::object();
    for (std::size_t i = 0; i < kNumFeatures; ++i)
        mdi[feature_names()[i]] = bundle.summary->mdi[i];
    json folds = json::array();
    for (const auto &s : cv.fold_scores)
        folds.push_back(optional_json(s));
    const auto &gp = bundle.derivation.gp();
    json rep = {{"mno", mno},
                {"direction", to_string(dir)},
                {"rows", rows.size()},
                {"folds", c.cv_folds},
                {"cv_r_squared", cv.r_squared},
                {"fold_r_squared", folds},
                {"mdi", mdi},
                {"derivation",
                 {{"length_scale", gp.hyper().length_scale},
                  {"signal_variance", gp.hyper().signal_variance},
                  {"noise_variance", gp.hyper().noise_variance},
                  {"inducing_points", gp.points().size()},
                  {"clip", {bundle.derivation.clip_range().lo, bundle.derivation.clip_range().hi}}}}};
    o.write("train_report_" + file_tag(mno, dir) + ".json", rep.dump(2) + '\n');
    report(out, "train", o, {{"cv_r_squared", cv.r_squared}});
}

void cmd_map(const Flags &f, const ProjectConfig &c, std::ostream &out)
{
    const auto loaded = load_traces(input_paths(f, c), c.origin);
    ConnectivityMap map(c.map_cell_size);
    map.set_origin(loaded.origin);
    std::set<std::pair<std::string, Direction>> pairs;
    for (const auto &t : loaded.traces) {
        for (const auto &s : t.trace.samples)
            map.insert(s);
        pairs.insert({t.trace.mno, t.trace.direction});
    }
    std::size_t layers = 0;
    for (const auto &[mno, dir] : pairs) {
        const bool bound = !f.model.empty() || c.models.contains(model_key(mno, dir)) ||
                           fs::exists(default_model_path(c, mno, dir));
        if (!bound)
            continue;
        const auto bundle = resolve_model(f, c, mno, dir);
        map.build_prediction_layer(bundle.forest, c.map_payload_mb);
        ++layers;
    }
    map.freeze();

    Outputs o{c, {}};
    o.write("map.json", serialize_map(map));
    o.write("map.csv", map.to_csv());
    report(out, "map", o, {{"cells", map.cells().size()}, {"prediction_layers", layers}});
}

/// Models and map for replay-style commands, keyed by operator and link.
struct ReplaySetup
{
    Loaded loaded;
    std::optional<ConnectivityMap> map;
};

ReplaySetup replay_setup(const Flags &f, const ProjectConfig &c)
{
    ReplaySetup s;
    s.map = resolve_map(c);
    std::optional<GeoPoint> origin = c.origin;
    if (s.map && s.map->origin())
        origin = *s.map->origin();
    s.loaded = load_traces(input_paths(f, c), origin);
    return s;
}

SchemeKind single_scheme(const Flags &f, const ProjectConfig &c, SchemeKind fallback)
{
    if (!f.scheme.empty())
        return parse_scheme_kind(f.scheme);
    return c.scheme.value_or(fallback);
}

std::optional<double> single_phi(const Flags &f)
{
    if (f.phi_max.empty())
        return std::nullopt;
    const auto v = parse_number_list(f.phi_max);
    if (v.size() != 1)
        throw ConfigError("--phi-max takes a single value for this command");
    return v.front();
}

void cmd_replay(const Flags &f, const ProjectConfig &c, std::ostream &out)
{
    const auto setup = replay_setup(f, c);
    const auto kind = single_scheme(f, c, SchemeKind::MlCat);
    std::string events = "trace,time_s,payload_mb,delta_t_s,predicted_mbits,virtual_mbits,duration_s,buffering_delay_s\n";
    json runs = json::array();
    for (const auto &r : setup.loaded.traces) {
        const auto &t = r.trace;
        const auto bundle = resolve_model(f, c, t.mno, t.direction);
        auto rc = base_run(c, build_scheme(c, kind, t.mno, t.direction, single_phi(f)), bundle, setup.map);
        rc.seed = run_seed(c.seed, t.id, 0, 0);
        const auto res = replay(rc, t);
        for (const auto &e : res.events) {
            json row = {e.time, e.payload_mb, e.delta_t, e.predicted, e.virtual_rate, e.duration, e.buffering_delay};
            events += t.id;
            for (const auto &v : row)
                events += ',' + v.dump();
            events += '\n';
        }
        runs.push_back({{"trace", t.id},
                        {"seed", res.seed},
                        {"phi_max", rc.scheme.phi_max},
                        {"transmissions", res.transmissions},
                        {"total_mb", res.total_mb},
                        {"mean_rate_mbits", optional_json(res.mean_rate)},
                        {"mean_delay_s", optional_json(res.mean_delay)}});
    }
    Outputs o{c, {}};
    const std::string tag = to_string(kind);
    o.write("replay_" + tag + "_events.csv", events);
    o.write("replay_" + tag + "_summary.json", json{{"scheme", tag}, {"runs", runs}}.dump(2) + '\n');
    report(out, "replay", o);
}

void cmd_sweep(const Flags &f, const ProjectConfig &c, std::ostream &out)
{
    const auto setup = replay_setup(f, c);
    std::vector<Trace> traces;
    for (const auto &r : setup.loaded.traces)
        traces.push_back(r.trace);
    const auto &first = traces.front();
    for (const auto &t : traces)
        if (t.mno != first.mno || t.direction != first.direction)
            throw ConfigError("sweep traces must share one operator and direction");
    const auto bundle = resolve_model(f, c, first.mno, first.direction);

    std::vector<SchemeKind> kinds;
    if (!f.scheme.empty())
        for (const auto &s : split_list(f.scheme))
            kinds.push_back(parse_scheme_kind(s));
    else if (!c.sweep_schemes.empty())
        kinds = c.sweep_schemes;
    else
        kinds.push_back(c.scheme.value_or(SchemeKind::Cat));
    const auto grid = f.phi_max.empty() ? c.sweep_phi_max : parse_number_list(f.phi_max);
    const std::size_t seeds = f.has_seeds ? f.seeds : c.sweep_seeds;

    std::string runs_csv, points_csv;
    json summary = json::array();
    for (std::size_t k = 0; k < kinds.size(); ++k) {
        const auto scheme = build_scheme(c, kinds[k], first.mno, first.direction, std::nullopt);
        auto rc = base_run(c, scheme, bundle, setup.map);
        const auto table = sweep(rc, grid, traces, seeds, c.jobs);
        auto rcsv = sweep_runs_csv(table), pcsv = sweep_points_csv(table);
        if (k > 0) {
            rcsv.erase(0, rcsv.find('\n') + 1);
            pcsv.erase(0, pcsv.find('\n') + 1);
        }
        runs_csv += rcsv;
        points_csv += pcsv;

        std::optional<std::size_t> best;
        for (std::size_t i = 0; i < table.points.size(); ++i) {
            const auto &p = table.points[i];
            if (p.mean_rate && (!best || *p.mean_rate > *table.points[*best].mean_rate))
                best = i;
        }
        summary.push_back({{"scheme", to_string(kinds[k])},
                           {"points", table.points.size()},
                           {"runs", table.runs.size()},
                           {"best_phi_max", best ? json(table.points[*best].phi_max) : json(nullptr)},
                           {"best_mean_rate_mbits", best ? optional_json(table.points[*best].mean_rate) : json(nullptr)},
                           {"best_mean_delay_s", best ? optional_json(table.points[*best].mean_delay) : json(nullptr)}});
    }
    Outputs o{c, {}};
    o.write("sweep_runs.csv", runs_csv);
    o.write("sweep_points.csv", points_csv);
    o.write("sweep_summary.json", json{{"seeds_per_trace", seeds}, {"traces", traces.size()}, {"schemes", summary}}.dump(2) + '\n');
    report(out, "sweep", o);
}

void cmd_matrix(const Flags &f, const ProjectConfig &c, std::ostream &out)
{
    if (f.by != "mno" && f.by != "scenario")
        throw ConfigError("--by must be 'mno' or 'scenario'");
    const auto loaded = load_traces(input_paths(f, c), c.origin);
    std::map<std::string, std::vector<LabeledRow>> groups;
    for (const auto &t : loaded.traces) {
        for (const auto &rec : t.records) {
            if (c.direction && rec.context.direction != *c.direction)
                continue;
            if (f.by == "scenario" && c.mno && rec.context.mno != *c.mno)
                continue;
            const auto &label = f.by == "mno" ? rec.context.mno : rec.context.scenario;
            groups[label].push_back({rec.context.features(), rec.data_rate});
        }
    }
    if (groups.size() < 2)
        throw DataError("cross matrix needs at least two " + f.by + " partitions, found " +
                        std::to_string(groups.size()));
    std::vector<Partition> parts;
    for (auto &[label, rows] : groups)
        parts.push_back({label, std::move(rows)});
    const auto m = cross_matrix(parts, forest_trainer(c.forest), c.cv_folds, c.seed);

    std::string csv = "train\\test";
    for (const auto &l : m.labels)
        csv += ',' + l;
    csv += '\n';
    for (std::size_t i = 0; i < m.labels.size(); ++i) {
        csv += m.labels[i];
        for (double v : m.r2[i])
            csv += ',' + json(v).dump();
        csv += '\n';
    }
    Outputs o{c, {}};
    o.write("matrix_" + f.by + ".csv", csv);
    report(out, "matrix", o);
}

std::map<std::string, std::vector<double>> read_rates(const fs::path &path)
{
    const auto text = read_text_file(path);
    std::map<std::string, std::vector<double>> out;
    std::size_t line_no = 0, start = 0;
    std::optional<std::size_t> scheme_col, rate_col;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string::npos)
            end = text.size();
        std::string line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        const auto cells = split_list(line);
        if (!scheme_col) {
            for (std::size_t i = 0; i < cells.size(); ++i) {
                if (cells[i] == "scheme")
                    scheme_col = i;
                if (cells[i] == "rate_mbits")
                    rate_col = i;
            }
            if (!scheme_col || !rate_col)
                throw DataError(path.string() + ": header needs 'scheme' and 'rate_mbits'");
            continue;
        }
        if (cells.size() <= std::max(*scheme_col, *rate_col))
            throw DataError(path.string() + ": line " + std::to_string(line_no) + ": missing fields");
        double v = 0.0;
        const auto &cell = cells[*rate_col];
        auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v))
            throw DataError(path.string() + ": line " + std::to_string(line_no) + ": malformed rate '" + cell + "'");
        out[cells[*scheme_col]].push_back(v);
    }
    if (out.empty())
        throw DataError(path.string() + ": no rates");
    return out;
}

void cmd_validate(const Flags &f, const ProjectConfig &c, std::ostream &out)
{
    if (f.inputs.size() != 2)
        throw ConfigError("validate takes exactly two files: <real.csv> <simulated.csv>");
    const auto real = read_rates(f.inputs[0]);
    const auto sim = read_rates(f.inputs[1]);
    for (const auto &[k, v] : real)
        if (!sim.contains(k))
            throw DataError("scheme '" + k + "' missing from " + f.inputs[1]);
    for (const auto &[k, v] : sim)
        if (!real.contains(k))
            throw DataError("scheme '" + k + "' missing from " + f.inputs[0]);

    std::string csv = "scheme,n_real,n_simulated,similarity\n";
    std::vector<double> sims;
    json per = json::object();
    for (const auto &[k, v] : real) {
        const double s = ecdf_similarity(v, sim.at(k));
        sims.push_back(s);
        per[k] = s;
        csv += k + ',' + std::to_string(v.size()) + ',' + std::to_string(sim.at(k).size()) + ',' + json(s).dump() + '\n';
    }
    const double overall = mean(sims);
    csv += "overall,,," + json(overall).dump() + '\n';
    Outputs o{c, {}};
    o.write("validate.csv", csv);
    report(out, "validate", o, {{"similarity", per}, {"overall", overall}});
}

void cmd_bench(const Flags &f, const ProjectConfig &c, std::ostream &out)
{
    const auto setup = replay_setup(f, c);
    const auto kind = single_scheme(f, c, SchemeKind::MlCat);
    const std::size_t reps = f.has_repetitions ? f.repetitions : c.bench_repetitions;
    json rows = json::array();
    for (const auto &r : setup.loaded.traces) {
        const auto &t = r.trace;
        const auto bundle = resolve_model(f, c, t.mno, t.direction);
        auto rc = base_run(c, build_scheme(c, kind, t.mno, t.direction, single_phi(f)), bundle, setup.map);
        rc.seed = run_seed(c.seed, t.id, 0, 0);
        const auto b = benchmark(rc, t, reps);
        rows.push_back({{"trace", t.id},
                        {"simulated_s", t.end_time() - t.start_time()},
                        {"repetitions", reps},
                        {"mean_s", b.mean_s},
                        {"std_s", b.std_s},
                        {"timings_s", b.timings_s}});
    }
    Outputs o{c, {}};
    o.write("bench.json", json{{"scheme", to_string(kind)}, {"runs", rows}}.dump(2) + '\n');
    report(out, "bench", o);
}

void error_line(std::ostream &err, const std::string &kind, int code, const std::string &message)
{
    err << json{{"error", kind}, {"code", code}, {"message", message}}.dump() << '\n';
}

} // namespace

ProjectConfig parse_project_config(std::string_view json_text) { return parse_config_text(json_text, fs::path()); }

ProjectConfig load_project_config(const fs::path &path)
{
    if (!fs::exists(path))
        throw ConfigError("config file '" + path.string() + "' not found");
    return parse_config_text(read_text_file(path), path.parent_path());
}

std::string model_key(const std::string &mno, Direction direction) { return mno + "/" + to_string(direction); }

int run(int argc, const char *const *argv, std::ostream &out, std::ostream &err)
{
    CLI::App app{"Data-driven network simulation: train, map, replay and sweep over drive-test traces", "ddns"};
    app.require_subcommand(1);
    Flags f;

    struct Sub
    {
        const char *name;
        const char *help;
        void (*fn)(const Flags &, const ProjectConfig &, std::ostream &);
    };
    const Sub subs[] = {
        {"ingest", "Parse trace CSVs and write canonical copies", cmd_ingest},
        {"synth", "Generate synthetic drive-test traces", cmd_synth},
        {"train", "Train the forest and derivation model for one operator and link", cmd_train},
        {"map", "Build the connectivity map and its prediction layers", cmd_map},
        {"replay", "Replay traces under one transmission scheme", cmd_replay},
        {"sweep", "Sweep phi_max for one or more schemes", cmd_sweep},
        {"matrix", "Cross-operator or cross-scenario R^2 matrix", cmd_matrix},
        {"validate", "ECDF similarity between real and simulated rate lists", cmd_validate},
        {"bench", "Time repeated replays", cmd_bench},
    };
    std::vector<std::pair<CLI::App *, const Sub *>> commands;
    for (const auto &s : subs) {
        auto *sub = app.add_subcommand(s.name, s.help);
        sub->add_option("--config", f.config, "Project config (JSON)");
        sub->add_option("--seed", f.seed, "Base seed");
        sub->add_option("--mno", f.mno, "Operator selection");
        sub->add_option("--direction", f.direction, "uplink or downlink");
        sub->add_option("--scheme", f.scheme, "periodic, CAT, pCAT, ML-CAT, ML-pCAT (comma list for sweep)");
        sub->add_option("--phi-max", f.phi_max, "phi_max value (comma list for sweep)");
        sub->add_option("--out", f.out, "Output directory");
        sub->add_option("--jobs", f.jobs, "Worker threads; 0 = all cores");
        sub->add_option("--model", f.model, "Model document");
        sub->add_option("--map", f.map, "Map document");
        sub->add_option("inputs", f.inputs, "Input files");
        if (std::string_view(s.name) == "matrix")
            sub->add_option("--by", f.by, "Partition key: mno or scenario");
        if (std::string_view(s.name) == "bench")
            sub->add_option("--repetitions", f.repetitions, "Replays per trace");
        if (std::string_view(s.name) == "sweep")
            sub->add_option("--seeds", f.seeds, "Repetitions per trace and grid point");
        if (std::string_view(s.name) == "synth")
            sub->add_option("--traces", f.n_traces, "Number of traces");
        commands.emplace_back(sub, &s);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError &e) {
        error_line(err, to_string(ErrorKind::Config), static_cast<int>(ErrorKind::Config), e.what());
        return static_cast<int>(ErrorKind::Config);
    }

    for (auto &[sub, s] : commands) {
        if (!sub->parsed())
            continue;
        auto given = [&](const char *name) { return sub->get_option_no_throw(name) && sub->count(name) > 0; };
        f.has_seed = given("--seed");
        f.has_jobs = given("--jobs");
        f.has_repetitions = given("--repetitions");
        f.has_seeds = given("--seeds");
        f.has_n_traces = given("--traces");
        try {
            const auto cfg = resolve_config(f);
            s->fn(f, cfg, out);
            return 0;
        } catch (const Error &e) {
            error_line(err, to_string(e.kind()), e.exit_code(), e.what());
            return e.exit_code();
        } catch (const fs::filesystem_error &e) {
            error_line(err, to_string(ErrorKind::Data), static_cast<int>(ErrorKind::Data), e.what());
            return static_cast<int>(ErrorKind::Data);
        } catch (const std::exception &e) {
            error_line(err, "internal", 1, e.what());
            return 1;
        }
    }
    return 0;
}

} // namespace ddns::cli
