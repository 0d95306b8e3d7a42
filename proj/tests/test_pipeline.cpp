#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "tdpmm/generator.hpp"
#include "tdpmm/pipeline.hpp"

using namespace tdpmm;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = fs::temp_directory_path() /
                ("tdpmm_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

// Writes a planted corpus plus labels and returns the directory.
fs::path planted_dir(const TempDir& tmp, std::size_t m = 200, std::uint64_t seed = 3) {
    auto s = sample_finite_corpus(planted_spec(4, m, 6.0, {16, 16, 24}, 3, 0.92, seed));
    auto dir = tmp / "corpus";
    fs::create_directories(dir);
    write_corpus(s.corpus, (dir / "corpus.txt").string(), (dir / "vocab.txt").string());
    std::ofstream labels(dir / "labels.csv");
    write_labels(labels, s.corpus, s.labels);
    return dir;
}

RunConfig quick_config(const fs::path& corpus_dir, const fs::path& out) {
    RunConfig c;
    c.corpus_dir = corpus_dir.string();
    c.output = out.string();
    c.model.alpha = 0.01;
    c.model.beta = {0.01, 0.01, 0.01};
    c.model.r = 5;
    c.model.max_iter = 10;
    return c;
}

int run_cli(const std::string& args) {
    const char* cli = std::getenv("TDPMM_CLI");
    if (!cli) return -1;
    const std::string cmd = std::string(cli) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, ParsesKeysAndComments) {
    RunConfig c;
    std::istringstream in(
        "# comment\n"
        "alpha = 0.5\n"
        "  r=12  \n"
        "\n"
        "beta_t = 0.042 # trailing\n"
        "use_graphs = true\n"
        "time_format = label\n");
    apply_config_text(c, in, "test");
    EXPECT_EQ(c.model.alpha, 0.5);
    EXPECT_EQ(c.model.r, 12u);
    EXPECT_EQ(c.model.beta[2], 0.042);
    EXPECT_TRUE(c.use_graphs);
    EXPECT_EQ(c.schema.time_format, "label");
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
    RunConfig c;
    std::istringstream unknown("alpah = 1\n");
    EXPECT_THROW(apply_config_text(c, unknown, "t"), ValidationError);
    std::istringstream bad("r = ten\n");
    EXPECT_THROW(apply_config_text(c, bad, "t"), ValidationError);
    std::istringstream noeq("alpha 1\n");
    EXPECT_THROW(apply_config_text(c, noeq, "t"), ValidationError);
    EXPECT_THROW(set_config_value(c, "use_graphs", "maybe"), ValidationError);
}

TEST(Config, ManifestRoundTrips) {
    RunConfig a;
    a.trips = "x.csv";
    a.model.alpha = 0.0123456789012345;
    a.model.beta = {0.3, 0.2, 0.042};
    a.model.seed = 987654321987ULL;
    a.gamma = 0.65;
    a.schema.delimiter = ';';
    a.weighted_ch = true;
    std::stringstream m1;
    write_manifest(m1, a);
    RunConfig b;
    std::istringstream in(m1.str());
    apply_config_text(b, in, "manifest");
    std::stringstream m2;
    write_manifest(m2, b);
    EXPECT_EQ(m1.str(), m2.str());
    EXPECT_EQ(b.model.alpha, a.model.alpha);
    EXPECT_EQ(b.model.seed, a.model.seed);
    EXPECT_EQ(b.schema.delimiter, ';');
    for (const auto& key : config_key_names()) EXPECT_EQ(get_config_value(a, key), get_config_value(b, key)) << key;
}

TEST(Config, Validation) {
    RunConfig c;
    EXPECT_THROW(c.validate(), ValidationError);
    c.trips = "t.csv";
    EXPECT_NO_THROW(c.validate());
    c.use_graphs = true;
    EXPECT_THROW(c.validate(), ValidationError);
    c.use_graphs = false;
    c.metric_space = "both";
    EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Seeds, StagesAreDistinctAndStable) {
    auto a = stage_seeds(1);
    auto b = stage_seeds(1);
    EXPECT_EQ(a.sampler, b.sampler);
    EXPECT_NE(a.sampler, a.leiden_adj);
    EXPECT_NE(a.leiden_adj, a.leiden_poi);
    EXPECT_NE(a.sampler, a.generator);
    EXPECT_NE(stage_seeds(2).sampler, a.sampler);
}

TEST(Pipeline, RunIsDeterministicAndWritesArtifacts) {
    TempDir tmp;
    auto corpus = planted_dir(tmp);
    auto c1 = quick_config(corpus, tmp / "run1");
    c1.labels = (corpus / "labels.csv").string();
    auto c2 = c1;
    c2.output = (tmp / "run2").string();
    auto r1 = run_pipeline(c1);
    auto r2 = run_pipeline(c2);
    for (const char* f : {"assignments.csv", "clusters.txt", "k_trace.csv", "metrics.csv", "relocation.csv"})
        EXPECT_EQ(slurp(tmp / "run1" / f), slurp(tmp / "run2" / f)) << f;
    ASSERT_TRUE(r1.external.has_value());
    EXPECT_GE(r1.external->first, 0.0);
    EXPECT_LE(r1.external->first, 1.0);
    EXPECT_NE(slurp(tmp / "run1" / "metrics.csv").find("NMI,"), std::string::npos);

    // The manifest reproduces the run.
    auto replay = load_config((tmp / "run1" / "manifest.conf").string());
    replay.output = (tmp / "run3").string();
    run_pipeline(replay);
    EXPECT_EQ(slurp(tmp / "run1" / "assignments.csv"), slurp(tmp / "run3" / "assignments.csv"));

    auto k_lines = slurp(tmp / "run1" / "k_trace.csv");
    EXPECT_EQ(std::count(k_lines.begin(), k_lines.end(), '\n'), 11);
}

TEST(Pipeline, GraphStageRemapsStations) {
    TempDir tmp;
    const std::vector<std::string> st{"A", "B", "C", "D", "E", "F"};
    std::string topo = "from,to\n";
    for (std::size_t i = 0; i + 1 < st.size(); ++i) topo += st[i] + "," + st[i + 1] + "\n";
    spit(tmp / "topo.csv", topo);
    spit(tmp / "poi.csv", "station,shops,offices\nA,5,0\nB,4,1\nC,6,0\nD,0,5\nE,1,4\nF,0,7\n");
    std::string trips = "passenger_id,origin,destination,time\n";
    std::mt19937 rng(4);
    for (int p = 0; p < 60; ++p)
        for (int t = 0; t < 4; ++t)
            trips += "p" + std::to_string(p) + "," + st[rng() % 6] + "," + st[rng() % 6] + "," +
                     std::to_string(rng() % 24) + "\n";
    spit(tmp / "trips.csv", trips);

    RunConfig c;
    c.trips = (tmp / "trips.csv").string();
    c.topology = (tmp / "topo.csv").string();
    c.poi = (tmp / "poi.csv").string();
    c.use_graphs = true;
    c.h = 1;
    c.model.r = 5;
    c.model.max_iter = 5;
    c.output = (tmp / "out").string();
    auto prepared = prepare_corpus(c);
    ASSERT_TRUE(prepared.graphs.has_value());
    EXPECT_EQ(prepared.graphs->poi.n_communities, 2u);
    EXPECT_LT(prepared.clustered.vocab[0].size(), prepared.original.vocab[0].size());
    EXPECT_EQ(prepared.clustered.total_words(), prepared.original.total_words());

    run_pipeline(c);
    auto communities = slurp(tmp / "out" / "communities.csv");
    EXPECT_EQ(std::count(communities.begin(), communities.end(), '\n'), 7);
    EXPECT_TRUE(fs::exists(tmp / "out" / "graph_summary.csv"));

    spit(tmp / "poi_bad.csv", "station,shops\nA,1\nB,1\nC,1\nD,1\nE,1\n");
    c.poi = (tmp / "poi_bad.csv").string();
    EXPECT_THROW(prepare_corpus(c), ValidationError);
}

TEST(Sweep, GridProducesOneRowPerPointAndMonotoneK) {
    TempDir tmp;
    auto corpus = planted_dir(tmp, 240, 5);
    auto c = quick_config(corpus, tmp / "sweep");
    SweepGrid grid{parse_grid_axis("r=2,10,30,80")};
    auto rows = sweep(c, grid);
    ASSERT_EQ(rows.size(), 4u);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_EQ(rows[i].status, "ok");
        EXPECT_TRUE(fs::exists(tmp / "sweep" / ("point_" + std::to_string(i)) / "assignments.csv"));
        if (i) {
            EXPECT_LE(rows[i].k, rows[i - 1].k);
        }
    }
    std::stringstream table;
    write_sweep_table(table, "r", rows);
    std::string first;
    std::getline(table, first);
    EXPECT_EQ(first.rfind("r,", 0), 0u) << first;
    EXPECT_NE(table.str().find("CH"), std::string::npos);

    EXPECT_THROW(sweep(c, {parse_grid_axis("gamma=0.5,0.7")}), ValidationError);
    EXPECT_THROW(parse_grid_axis("r"), ValidationError);
}

TEST(Sweep, ParallelMatchesSerial) {
    TempDir tmp;
    auto corpus = planted_dir(tmp, 120, 6);
    auto c = quick_config(corpus, tmp / "serial");
    SweepGrid grid{parse_grid_axis("alpha=0.01,1"), parse_grid_axis("r=2,8")};
    auto serial = sweep(c, grid);
    c.jobs = 3;
    c.output = (tmp / "parallel").string();
    auto parallel = sweep(c, grid);
    ASSERT_EQ(serial.size(), 4u);
    for (std::size_t i = 0; i < serial.size(); ++i) {
        EXPECT_EQ(serial[i].point, parallel[i].point);
        EXPECT_EQ(serial[i].k, parallel[i].k);
    }
}

TEST(Cli, ExitCodes) {
    if (!std::getenv("TDPMM_CLI")) {
        GTEST_SKIP() << "TDPMM_CLI not set";
    }
    TempDir tmp;
    const auto synth = (tmp / "synth").string();
    ASSERT_EQ(run_cli("synth --k 3 --m 60 --mean-length 4 --vocab 9 9 9 --words-per-cluster 3 --out " + synth), 0);
    EXPECT_TRUE(fs::exists(tmp / "synth" / "labels.csv"));
    const auto out = (tmp / "out").string();
    EXPECT_EQ(run_cli("run --corpus-dir " + synth + " --r 3 --max-iter 3 --labels " + synth + "/labels.csv --output " +
                      out),
              0);
    EXPECT_TRUE(fs::exists(tmp / "out" / "metrics.csv"));
    EXPECT_EQ(run_cli("eval --corpus-dir " + synth + " --assignments " + out + "/assignments.csv"), 0);
    EXPECT_EQ(run_cli("sweep --corpus-dir " + synth + " --max-iter 2 --grid r=2,4 --output " + out + "/sw"), 0);
    EXPECT_TRUE(fs::exists(tmp / "out" / "sw" / "sweep_table.csv"));

    EXPECT_EQ(run_cli("run --corpus-dir " + synth + " --alpha -1"), 1);
    EXPECT_EQ(run_cli("run --corpus-dir " + synth + " --alpha abc"), 1);
    EXPECT_EQ(run_cli("run --no-such-flag 1"), 1);
    EXPECT_EQ(run_cli("run --trips " + (tmp / "missing.csv").string()), 2);
    EXPECT_EQ(run_cli("bogus"), 1);
}
