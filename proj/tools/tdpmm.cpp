// tdpmm: command-line front end for the trajectory clustering pipeline.
//
// Exit codes: 0 success, 1 validation error, 2 I/O error, 3 internal
// consistency failure.

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tdpmm/pipeline.hpp"

namespace fs = std::filesystem;
using namespace tdpmm;

namespace {

/// Adds `--<key>` for every config key; values apply on top of --config.
struct ConfigFlags {
    std::string config_path;
    std::map<std::string, std::string> values;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "Flat key = value config file");
        for (const auto& key : config_key_names()) {
            std::string names = "--" + key;
            std::string dashed = key;
            std::replace(dashed.begin(), dashed.end(), '_', '-');
            if (dashed != key) names += ",--" + dashed;
            cmd->add_option_function<std::string>(
                names, [this, key](const std::string& v) { values[key] = v; }, "Config key '" + key + "'");
        }
    }

    RunConfig resolve() const {
        RunConfig cfg;
        if (!config_path.empty()) cfg = load_config(config_path);
        for (const auto& [k, v] : values) set_config_value(cfg, k, v);
        return cfg;
    }
};

void write_corpus_dir(const Corpus& corpus, const fs::path& dir) {
    fs::create_directories(dir);
    write_corpus(corpus, (dir / "corpus.txt").string(), (dir / "vocab.txt").string());
}

int cmd_ingest(const RunConfig& cfg) {
    if (cfg.trips.empty()) throw ValidationError("cli", "ingest needs --trips");
    auto corpus = ingest(cfg);
    write_corpus_dir(corpus, cfg.output);
    const auto sizes = corpus.vocab_sizes();
    std::cout << "M=" << corpus.size() << " trips=" << corpus.total_words() << " V=(" << sizes[0] << ", " << sizes[1]
              << ", " << sizes[2] << ") -> " << cfg.output << '\n';
    return 0;
}

int cmd_graphs(RunConfig cfg) {
    cfg.use_graphs = true;
    cfg.validate();
    auto prepared = prepare_corpus(cfg);
    write_graph_outputs(*prepared.graphs, cfg.output);
    write_corpus_dir(prepared.clustered, cfg.output);
    std::cout << "proximity: " << prepared.graphs->adj.n_communities << " communities (Q="
              << prepared.graphs->adj.modularity << "); functional: " << prepared.graphs->poi.n_communities
              << " communities (Q=" << prepared.graphs->poi.modularity << "); spatial vocabulary "
              << prepared.original.vocab[0].size() << " -> " << prepared.clustered.vocab[0].size() << '\n';
    return 0;
}

int cmd_cluster(RunConfig cfg) {
    cfg.use_graphs = false;
    cfg.validate();
    auto prepared = prepare_corpus(cfg);
    auto res = cluster_and_report(cfg, prepared, cfg.output);
    std::cout << "K=" << res.metrics.k << " RMSSTD=" << res.metrics.rmsstd << " RS=" << res.metrics.rs
              << " CH=" << res.metrics.ch << '\n';
    for (const auto& r : res.run.relocations)
        for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& assignments) {
    auto corpus = ingest(cfg);
    auto in = text::open_input(assignments, "cli");
    auto labels = read_assignments(in, corpus);
    auto report = evaluate(corpus, labels, MetricOptions{cfg.normalize_docs, cfg.weighted_ch});
    write_metric_report(std::cout, report);
    if (!cfg.labels.empty()) {
        auto truth = read_true_labels(cfg.labels, corpus);
        std::cout << "NMI," << nmi(truth, labels) << ",\nARI," << ari(truth, labels) << ",\n";
    }
    return 0;
}

int cmd_run(const RunConfig& cfg) {
    auto res = run_pipeline(cfg);
    std::cout << "K=" << res.metrics.k << " RMSSTD=" << res.metrics.rmsstd << " RS=" << res.metrics.rs
              << " CH=" << res.metrics.ch;
    if (res.external) std::cout << " NMI=" << res.external->first << " ARI=" << res.external->second;
    std::cout << " -> " << cfg.output << '\n';
    for (const auto& r : res.run.relocations)
        for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
    return 0;
}

int cmd_sweep(const RunConfig& cfg, const std::vector<std::string>& axes) {
    if (axes.empty()) throw ValidationError("cli", "sweep needs at least one --grid name=v1,v2,...");
    SweepGrid grid;
    for (const auto& a : axes) grid.push_back(parse_grid_axis(a));
    auto rows = sweep(cfg, grid);
    const fs::path dir(cfg.output);
    {
        auto f = text::open_output((dir / "sweep.csv").string(), "cli");
        write_sweep_rows(f, grid, rows);
    }
    if (grid.size() == 1) {
        auto f = text::open_output((dir / "sweep_table.csv").string(), "cli");
        write_sweep_table(f, grid.front().first, rows);
        write_sweep_table(std::cout, grid.front().first, rows);
    } else {
        write_sweep_rows(std::cout, grid, rows);
    }
    return 0;
}

struct SynthOptions {
    std::string mode = "finite";
    std::size_t k = 5;
    std::size_t m = 500;
    double mean_length = 8.0;
    std::vector<std::size_t> vocab{20, 20, 24};
    std::size_t words_per_cluster = 4;
    double mass = 0.9;
    double alpha = 1.0;
    double beta = 0.1;
    std::uint64_t seed = 1;
    std::string out = "synth";
};

int cmd_synth(const SynthOptions& o) {
    if (o.vocab.size() != kNumDims) throw ValidationError("cli", "--vocab needs three sizes");
    const VocabSizes vocab{o.vocab[0], o.vocab[1], o.vocab[2]};
    const auto seed = stage_seeds(o.seed).generator;
    SyntheticCorpus s;
    if (o.mode == "finite") {
        s = sample_finite_corpus(planted_spec(o.k, o.m, o.mean_length, vocab, o.words_per_cluster, o.mass, seed));
    } else if (o.mode == "infinite") {
        GenerativeSpec spec;
        spec.mode = GenMode::Infinite;
        spec.vocab = vocab;
        spec.m = o.m;
        spec.mean_length = o.mean_length;
        spec.alpha = o.alpha;
        spec.beta = {o.beta, o.beta, o.beta};
        spec.seed = seed;
        s = sample_dp_corpus(spec);
    } else {
        throw ValidationError("cli", "--mode must be 'finite' or 'infinite'");
    }
    write_corpus_dir(s.corpus, o.out);
    auto f = text::open_output((fs::path(o.out) / "labels.csv").string(), "cli");
    write_labels(f, s.corpus, s.labels);
    std::cout << "M=" << s.corpus.size() << " tables=" << s.n_tables() << " trips=" << s.corpus.total_words() << " -> "
              << o.out << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tensor DPMM trajectory clustering"};
    // -h is taken by the hop threshold key, so help is long-form only.
    app.set_help_flag("--help", "Print this help message and exit");
    app.require_subcommand(1);

    ConfigFlags ingest_flags, graphs_flags, cluster_flags, eval_flags, run_flags, sweep_flags;
    auto* ingest_cmd = app.add_subcommand("ingest", "Parse raw trips into a serialized corpus (corpus.txt, vocab.txt)");
    ingest_flags.attach(ingest_cmd);
    auto* graphs_cmd = app.add_subcommand("graphs", "Build station graphs, detect communities, remap the corpus");
    graphs_flags.attach(graphs_cmd);
    auto* cluster_cmd = app.add_subcommand("cluster", "Run the sampler on a corpus and export assignments");
    cluster_flags.attach(cluster_cmd);
    auto* eval_cmd = app.add_subcommand("eval", "Compute RMSSTD, RS, CH (and NMI/ARI with --labels)");
    eval_flags.attach(eval_cmd);
    std::string assignments;
    eval_cmd->add_option("--assignments", assignments, "passenger_id,cluster_id file")->required();
    auto* run_cmd = app.add_subcommand("run", "Full pipeline: ingest, graphs, sample, evaluate, export");
    run_flags.attach(run_cmd);
    auto* sweep_cmd = app.add_subcommand("sweep", "Grid sweep over model parameters");
    sweep_flags.attach(sweep_cmd);
    std::vector<std::string> grid;
    sweep_cmd->add_option("--grid", grid, "Axis name=v1,v2,... (repeatable)")->required();

    SynthOptions synth;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a labelled synthetic corpus");
    synth_cmd->add_option("--mode", synth.mode, "finite (planted clusters) or infinite (CRP)");
    synth_cmd->add_option("--k", synth.k, "Planted clusters (finite mode)");
    synth_cmd->add_option("--m", synth.m, "Passengers");
    synth_cmd->add_option("--mean-length", synth.mean_length, "Mean trips per passenger");
    synth_cmd->add_option("--vocab", synth.vocab, "Vocabulary sizes O D T")->expected(3);
    synth_cmd->add_option("--words-per-cluster", synth.words_per_cluster, "High-mass words per cluster and dimension");
    synth_cmd->add_option("--mass", synth.mass, "Probability mass on a cluster's own words");
    synth_cmd->add_option("--alpha", synth.alpha, "CRP concentration (infinite mode)");
    synth_cmd->add_option("--beta", synth.beta, "Topic Dirichlet concentration (infinite mode)");
    synth_cmd->add_option("--seed", synth.seed, "Root seed");
    synth_cmd->add_option("--out", synth.out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*ingest_cmd) return cmd_ingest(ingest_flags.resolve());
        if (*graphs_cmd) return cmd_graphs(graphs_flags.resolve());
        if (*cluster_cmd) return cmd_cluster(cluster_flags.resolve());
        if (*eval_cmd) return cmd_eval(eval_flags.resolve(), assignments);
        if (*run_cmd) return cmd_run(run_flags.resolve());
        if (*sweep_cmd) return cmd_sweep(sweep_flags.resolve(), grid);
        if (*synth_cmd) return cmd_synth(synth);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: io: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
