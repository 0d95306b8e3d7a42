#pragma once

// Config-driven orchestration: ingest -> graphs -> remap -> sample -> evaluate
// -> export, plus parameter-grid sweeps.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "tdpmm/corpus.hpp"
#include "tdpmm/dpmm.hpp"
#include "tdpmm/error.hpp"
#include "tdpmm/eval.hpp"
#include "tdpmm/generator.hpp"
#include "tdpmm/graphs.hpp"
#include "tdpmm/rng.hpp"
#include "tdpmm/text.hpp"

namespace tdpmm {

namespace fs = std::filesystem;

/// Every knob of a pipeline run. Field names match the config-file keys.
struct RunConfig {
    // Inputs.
    std::string trips;
    std::string corpus_dir;  // alternative to trips: a serialized corpus directory
    std::string hops;
    std::string topology;    // alternative to hops: station edge list
    std::string poi;
    std::string labels;
    std::string station_vocab;

    // Ingestion.
    TripSchema schema;

    // Graphs.
    bool use_graphs = false;
    std::size_t h = 4;
    double gamma = 0.7;

    // Model.
    Hyperparams model;

    // Evaluation.
    bool normalize_docs = false;
    bool weighted_ch = false;
    std::string metric_space = "remapped";

    std::string output = "out";
    std::size_t jobs = 1;

    void validate() const {
        if (trips.empty() && corpus_dir.empty()) throw ValidationError("cli", "one of 'trips' or 'corpus_dir' is required");
        if (use_graphs && ((hops.empty() && topology.empty()) || poi.empty()))
            throw ValidationError("cli", "use_graphs requires a hop-distance matrix (or topology) and a POI matrix");
        if (metric_space != "original" && metric_space != "remapped")
            throw ValidationError("cli", "metric_space must be 'original' or 'remapped'");
        if (!(gamma > 0.0 && gamma <= 1.0)) throw ValidationError("cli", "gamma must lie in (0, 1]");
        if (jobs < 1) throw ValidationError("cli", "jobs must be at least 1");
        model.validate();
    }
};

namespace detail {

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ValidationError("cli", "'" + key + "' expects a boolean, got '" + v + "'");
}

template <typename T>
T parse_value(const std::string& key, const std::string& v) {
    auto x = text::parse_number<T>(v);
    if (!x) throw ValidationError("cli", "'" + key + "' expects a number, got '" + v + "'");
    return *x;
}

inline std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

struct ConfigKey {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

inline const std::vector<std::pair<std::string, ConfigKey>>& config_keys() {
    static const std::vector<std::pair<std::string, ConfigKey>> keys = [] {
        std::vector<std::pair<std::string, ConfigKey>> k;
        auto str = [&](const char* name, std::string RunConfig::*field) {
            k.push_back({name, {[field](RunConfig& c, const std::string& v) { c.*field = v; },
                                [field](const RunConfig& c) { return c.*field; }}});
        };
        auto schema_str = [&](const char* name, std::string TripSchema::*field) {
            k.push_back({name, {[field](RunConfig& c, const std::string& v) { c.schema.*field = v; },
                                [field](const RunConfig& c) { return c.schema.*field; }}});
        };
        auto flag = [&](const char* name, std::function<bool&(RunConfig&)> ref) {
            k.push_back({name, {[ref, name](RunConfig& c, const std::string& v) { ref(c) = parse_bool(name, v); },
                                [ref](const RunConfig& c) {
                                    return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false");
                                }}});
        };
        auto real = [&](const char* name, std::function<double&(RunConfig&)> ref) {
            k.push_back({name, {[ref, name](RunConfig& c, const std::string& v) { ref(c) = parse_value<double>(name, v); },
                                [ref](const RunConfig& c) { return format_double(ref(const_cast<RunConfig&>(c))); }}});
        };
        auto count = [&](const char* name, std::function<std::size_t&(RunConfig&)> ref) {
            k.push_back({name, {[ref, name](RunConfig& c, const std::string& v) {
                                    ref(c) = parse_value<std::size_t>(name, v);
                                },
                                [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); }}});
        };

        str("trips", &RunConfig::trips);
        str("corpus_dir", &RunConfig::corpus_dir);
        str("hops", &RunConfig::hops);
        str("topology", &RunConfig::topology);
        str("poi", &RunConfig::poi);
        str("labels", &RunConfig::labels);
        str("station_vocab", &RunConfig::station_vocab);
        k.push_back({"delimiter", {[](RunConfig& c, const std::string& v) {
                                       if (v == "tab" || v == "\\t") c.schema.delimiter = '\t';
                                       else if (v.size() == 1) c.schema.delimiter = v[0];
                                       else throw ValidationError("cli", "'delimiter' must be one character or 'tab'");
                                   },
                                   [](const RunConfig& c) {
                                       return c.schema.delimiter == '\t' ? std::string("tab")
                                                                         : std::string(1, c.schema.delimiter);
                                   }}});
        schema_str("passenger_column", &TripSchema::passenger_column);
        schema_str("origin_column", &TripSchema::origin_column);
        schema_str("destination_column", &TripSchema::destination_column);
        schema_str("time_column", &TripSchema::time_column);
        schema_str("time_format", &TripSchema::time_format);
        k.push_back({"slot_hours", {[](RunConfig& c, const std::string& v) {
                                        c.schema.slot_hours = parse_value<int>("slot_hours", v);
                                    },
                                    [](const RunConfig& c) { return std::to_string(c.schema.slot_hours); }}});
        count("min_trips", [](RunConfig& c) -> std::size_t& { return c.schema.min_trips; });
        flag("use_graphs", [](RunConfig& c) -> bool& { return c.use_graphs; });
        count("h", [](RunConfig& c) -> std::size_t& { return c.h; });
        real("gamma", [](RunConfig& c) -> double& { return c.gamma; });
        real("alpha", [](RunConfig& c) -> double& { return c.model.alpha; });
        real("beta_o", [](RunConfig& c) -> double& { return c.model.beta[0]; });
        real("beta_d", [](RunConfig& c) -> double& { return c.model.beta[1]; });
        real("beta_t", [](RunConfig& c) -> double& { return c.model.beta[2]; });
        count("r", [](RunConfig& c) -> std::size_t& { return c.model.r; });
        count("max_iter", [](RunConfig& c) -> std::size_t& { return c.model.max_iter; });
        count("K0", [](RunConfig& c) -> std::size_t& { return c.model.k0; });
        k.push_back({"seed", {[](RunConfig& c, const std::string& v) { c.model.seed = parse_value<std::uint64_t>("seed", v); },
                              [](const RunConfig& c) { return std::to_string(c.model.seed); }}});
        flag("crp_prior", [](RunConfig& c) -> bool& { return c.model.crp_prior; });
        flag("disband_every_sweep", [](RunConfig& c) -> bool& { return c.model.disband_every_sweep; });
        flag("audit", [](RunConfig& c) -> bool& { return c.model.audit; });
        flag("normalize_docs", [](RunConfig& c) -> bool& { return c.normalize_docs; });
        flag("weighted_ch", [](RunConfig& c) -> bool& { return c.weighted_ch; });
        str("metric_space", &RunConfig::metric_space);
        str("output", &RunConfig::output);
        count("jobs", [](RunConfig& c) -> std::size_t& { return c.jobs; });
        return k;
    }();
    return keys;
}

}  // namespace detail

/// Sets one config key from its textual value.
inline void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
    for (const auto& [name, k] : detail::config_keys()) {
        if (name == key) {
            k.set(config, value);
            return;
        }
    }
    throw ValidationError("cli", "unknown config key '" + key + "'");
}

inline std::string get_config_value(const RunConfig& config, const std::string& key) {
    for (const auto& [name, k] : detail::config_keys())
        if (name == key) return k.get(config);
    throw ValidationError("cli", "unknown config key '" + key + "'");
}

inline std::vector<std::string> config_key_names() {
    std::vector<std::string> out;
    for (const auto& [name, k] : detail::config_keys()) out.push_back(name);
    return out;
}

/// Flat "key = value" lines; '#' starts a comment; blank lines ignored.
inline void apply_config_text(RunConfig& config, std::istream& in, const std::string& source) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        auto t = text::trim(line);
        if (t.empty()) continue;
        auto eq = t.find('=');
        if (eq == std::string_view::npos)
            throw ValidationError("cli", source + ":" + std::to_string(line_no) + ": expected 'key = value'");
        set_config_value(config, std::string(text::trim(t.substr(0, eq))), std::string(text::trim(t.substr(eq + 1))));
    }
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
    auto in = text::open_input(path, "cli");
    apply_config_text(base, in, path);
    return base;
}

/// Every key with its current value; reading it back reproduces the config.
inline void write_manifest(std::ostream& out, const RunConfig& config) {
    out << "# tdpmm run manifest: rerun with `tdpmm run --config <this file>`\n";
    for (const auto& [name, k] : detail::config_keys()) out << name << " = " << k.get(config) << '\n';
}

/// Seeds for each stage derive from the root `seed`.
struct StageSeeds {
    std::uint64_t sampler;
    std::uint64_t leiden_adj;
    std::uint64_t leiden_poi;
    std::uint64_t generator;
};

inline StageSeeds stage_seeds(std::uint64_t root) {
    return {derive_seed(root, "sampler"), derive_seed(root, "leiden-adj"), derive_seed(root, "leiden-poi"),
            derive_seed(root, "generator")};
}

struct GraphStage {
    std::vector<std::string> stations;
    SemanticGraph proximity{0, GraphKind::Proximity};
    SemanticGraph functional{0, GraphKind::Functional};
    CommunityLabeling adj;
    CommunityLabeling poi;
};

struct PreparedCorpus {
    Corpus original;
    Corpus clustered;
    std::optional<GraphStage> graphs;
};

inline Corpus ingest(const RunConfig& config) {
    if (!config.corpus_dir.empty())
        return read_corpus((fs::path(config.corpus_dir) / "corpus.txt").string(),
                           (fs::path(config.corpus_dir) / "vocab.txt").string());
    TripSchema schema = config.schema;
    if (!config.station_vocab.empty()) schema.station_vocabulary = load_station_list(config.station_vocab);
    return load_trips(config.trips, schema);
}

/// Builds both station graphs, detects communities and aligns the POI table
/// to the hop matrix's station order.
inline GraphStage build_graphs(const RunConfig& config) {
    GraphStage g;
    HopMatrix hops;
    if (!config.hops.empty())
        std::tie(g.stations, hops) = read_hop_matrix(config.hops, config.schema.delimiter);
    else
        std::tie(g.stations, hops) = read_topology(config.topology, config.schema.delimiter);

    auto poi_table = read_named_matrix(config.poi, config.schema.delimiter);
    std::unordered_map<std::string, std::size_t> poi_row;
    for (std::size_t i = 0; i < poi_table.row_names.size(); ++i) poi_row.emplace(poi_table.row_names[i], i);
    std::vector<std::vector<double>> poi;
    for (const auto& s : g.stations) {
        auto it = poi_row.find(s);
        if (it == poi_row.end()) throw ValidationError("graphs", "station '" + s + "' missing from POI matrix");
        poi.push_back(poi_table.values[it->second]);
    }

    const auto seeds = stage_seeds(config.model.seed);
    g.proximity = build_proximity_graph(hops, config.h);
    g.functional = build_poi_graph(poi, config.gamma, g.stations);
    g.adj = detect_communities(g.proximity, seeds.leiden_adj);
    g.poi = detect_communities(g.functional, seeds.leiden_poi);
    return g;
}

inline PreparedCorpus prepare_corpus(const RunConfig& config) {
    PreparedCorpus p;
    p.original = ingest(config);
    if (config.use_graphs) {
        p.graphs = build_graphs(config);
        p.clustered = remap_corpus(p.original, p.graphs->adj, p.graphs->poi, p.graphs->stations);
    } else {
        p.clustered = p.original;
    }
    return p;
}

inline Hyperparams sampler_params(const RunConfig& config) {
    Hyperparams h = config.model;
    h.seed = stage_seeds(config.model.seed).sampler;
    return h;
}

struct PipelineResult {
    RunResult run;
    std::vector<ClusterId> labels;  // compact cluster ids per passenger
    MetricReport metrics;
    std::optional<std::pair<double, double>> external;  // NMI, ARI against supplied labels
};

inline std::vector<std::uint32_t> read_true_labels(const std::string& path, const Corpus& corpus) {
    auto in = text::open_input(path, "cli");
    return read_assignments(in, corpus);
}

inline void write_relocation_report(std::ostream& out, const RunResult& run) {
    out << "stage,disbanded,relocated,fallback,warning\n";
    for (std::size_t i = 0; i < run.relocations.size(); ++i) {
        const auto& r = run.relocations[i];
        out << i << ',' << r.disbanded.size() << ',' << r.relocated << ',' << (r.fallback_fired ? "true" : "false") << ',';
        for (std::size_t w = 0; w < r.warnings.size(); ++w) out << (w ? " | " : "") << r.warnings[w];
        out << '\n';
    }
}

/// Samples and evaluates an already prepared corpus, writing every artifact
/// into `dir`.
inline PipelineResult cluster_and_report(const RunConfig& config, const PreparedCorpus& prepared, const fs::path& dir) {
    PipelineResult out{run_sampler(prepared.clustered, sampler_params(config)), {}, {}, {}};
    out.labels = out.run.state.compact_assignments();
    const MetricOptions opts{config.normalize_docs, config.weighted_ch};
    const Corpus& metric_corpus = config.metric_space == "original" ? prepared.original : prepared.clustered;
    out.metrics = evaluate(metric_corpus, out.labels, opts);
    if (!config.labels.empty()) {
        auto truth = read_true_labels(config.labels, prepared.clustered);
        out.external = std::pair{nmi(truth, out.labels), ari(truth, out.labels)};
    }

    fs::create_directories(dir);
    auto file = [&](const char* name) { return text::open_output((dir / name).string(), "cli"); };
    {
        auto f = file("assignments.csv");
        write_assignments(f, prepared.clustered, out.labels);
    }
    {
        auto f = file("clusters.txt");
        write_cluster_summary(f, out.run.state, prepared.clustered);
    }
    {
        auto f = file("k_trace.csv");
        write_k_trace(f, out.run.k_trace);
    }
    {
        auto f = file("metrics.csv");
        write_metric_report(f, out.metrics);
        f << "metric_space," << config.metric_space << ",\n";
        if (out.external) {
            f << "NMI," << detail::format_double(out.external->first) << ",\n";
            f << "ARI," << detail::format_double(out.external->second) << ",\n";
        }
    }
    {
        auto f = file("relocation.csv");
        write_relocation_report(f, out.run);
    }
    {
        auto f = file("manifest.conf");
        write_manifest(f, config);
    }
    return out;
}

inline void write_graph_outputs(const GraphStage& g, const fs::path& dir) {
    fs::create_directories(dir);
    auto f = text::open_output((dir / "communities.csv").string(), "cli");
    write_community_labels(f, g.stations, g.adj, g.poi);
    auto m = text::open_output((dir / "graph_summary.csv").string(), "cli");
    m << "graph,nodes,edges,communities,modularity\n";
    m << "proximity," << g.proximity.n_nodes() << ',' << g.proximity.n_edges() << ',' << g.adj.n_communities << ','
      << detail::format_double(g.adj.modularity) << '\n';
    m << "functional," << g.functional.n_nodes() << ',' << g.functional.n_edges() << ',' << g.poi.n_communities << ','
      << detail::format_double(g.poi.modularity) << '\n';
}

/// Full pipeline into config.output.
inline PipelineResult run_pipeline(const RunConfig& config) {
    config.validate();
    const auto prepared = prepare_corpus(config);
    const fs::path dir(config.output);
    fs::create_directories(dir);
    write_corpus(prepared.clustered, (dir / "corpus.txt").string(), (dir / "vocab.txt").string());
    if (prepared.graphs) write_graph_outputs(*prepared.graphs, dir);
    return cluster_and_report(config, prepared, dir);
}

struct SweepRow {
    std::vector<std::pair<std::string, std::string>> point;
    std::size_t k = 0;
    double rmsstd = 0.0;
    double rs = 0.0;
    double ch = 0.0;
    bool fallback = false;
    std::string status = "ok";
};

using SweepGrid = std::vector<std::pair<std::string, std::vector<std::string>>>;

/// "name=v1,v2,v3" into a grid axis.
inline std::pair<std::string, std::vector<std::string>> parse_grid_axis(const std::string& spec) {
    auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw ValidationError("cli", "grid axis must look like name=v1,v2,...");
    auto values = text::split(std::string_view(spec).substr(eq + 1), ',');
    std::erase_if(values, [](const std::string& v) { return v.empty(); });
    if (values.empty()) throw ValidationError("cli", "grid axis '" + spec + "' has no values");
    return {std::string(text::trim(std::string_view(spec).substr(0, eq))), values};
}

inline const std::vector<std::string>& sweepable_keys() {
    static const std::vector<std::string> keys{"alpha", "beta_o", "beta_d", "beta_t", "r", "max_iter", "K0", "seed",
                                               "crp_prior", "disband_every_sweep"};
    return keys;
}

/// Runs one sampler per grid point (cartesian product, first axis slowest) on
/// a corpus prepared once. Point i writes its artifacts into output/point_<i>.
/// Failures are recorded in the row and the sweep continues.
inline std::vector<SweepRow> sweep(const RunConfig& base, const SweepGrid& grid) {
    base.validate();
    for (const auto& [name, values] : grid)
        if (std::find(sweepable_keys().begin(), sweepable_keys().end(), name) == sweepable_keys().end())
            throw ValidationError("cli", "'" + name + "' is not a model parameter and cannot be swept");

    std::vector<std::vector<std::pair<std::string, std::string>>> points{{}};
    for (const auto& [name, values] : grid) {
        std::vector<std::vector<std::pair<std::string, std::string>>> next;
        for (const auto& p : points)
            for (const auto& v : values) {
                auto q = p;
                q.emplace_back(name, v);
                next.push_back(std::move(q));
            }
        points = std::move(next);
    }

    const auto prepared = prepare_corpus(base);
    const fs::path dir(base.output);
    fs::create_directories(dir);
    if (prepared.graphs) write_graph_outputs(*prepared.graphs, dir);

    std::vector<SweepRow> rows(points.size());
    auto run_point = [&](std::size_t i) {
        SweepRow& row = rows[i];
        row.point = points[i];
        try {
            RunConfig cfg = base;
            for (const auto& [k, v] : points[i]) set_config_value(cfg, k, v);
            cfg.output = (dir / ("point_" + std::to_string(i))).string();
            cfg.validate();
            auto res = cluster_and_report(cfg, prepared, cfg.output);
            row.k = res.metrics.k;
            row.rmsstd = res.metrics.rmsstd;
            row.rs = res.metrics.rs;
            row.ch = res.metrics.ch;
            row.fallback = res.run.fallback_fired();
        } catch (const std::exception& e) {
            row.status = std::string("error: ") + e.what();
        }
    };

    const std::size_t workers = std::min(base.jobs, points.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < points.size(); ++i) run_point(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < points.size(); i = next++) run_point(i);
            });
        for (auto& t : pool) t.join();
    }
    return rows;
}

/// One row per grid point: parameter columns, K, RMSSTD, RS, CH, fallback, status.
inline void write_sweep_rows(std::ostream& out, const SweepGrid& grid, const std::vector<SweepRow>& rows) {
    for (const auto& [name, values] : grid) out << name << ',';
    out << "K,RMSSTD,RS,CH,fallback,status\n";
    for (const auto& row : rows) {
        for (const auto& [k, v] : row.point) out << v << ',';
        out << row.k << ',' << detail::format_double(row.rmsstd) << ',' << detail::format_double(row.rs) << ','
            << detail::format_double(row.ch) << ',' << (row.fallback ? "true" : "false") << ',' << row.status << '\n';
    }
}

/// Sensitivity-table layout for a single swept parameter: a header row with
/// the parameter values, then rows K, RMSSTD, RS, CH.
inline void write_sweep_table(std::ostream& out, const std::string& param, const std::vector<SweepRow>& rows) {
    auto line = [&](const std::string& label, auto field) {
        out << label;
        for (const auto& r : rows) out << ',' << field(r);
        out << '\n';
    };
    line(param, [](const SweepRow& r) { return r.point.empty() ? std::string() : r.point.front().second; });
    line("K", [](const SweepRow& r) { return std::to_string(r.k); });
    line("RMSSTD", [](const SweepRow& r) { return detail::format_double(r.rmsstd); });
    line("RS", [](const SweepRow& r) { return detail::format_double(r.rs); });
    line("CH", [](const SweepRow& r) { return detail::format_double(r.ch); });
}

}  // namespace tdpmm
