#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>
#include <set>

#include "graph_oracle.hpp"
#include "tdpmm/graphs.hpp"

using namespace tdpmm;
using namespace tdpmm::testing;

namespace {

using Edges = std::vector<std::pair<std::size_t, std::size_t>>;

SemanticGraph make_graph(std::size_t n, const Edges& edges) {
    SemanticGraph g(n, GraphKind::Proximity);
    for (auto [a, b] : edges) g.set_edge(a, b);
    return g;
}

}  // namespace

TEST(ProximityGraph, PathThresholds) {
    HopMatrix hops{{0, 1, 2}, {1, 0, 1}, {2, 1, 0}};
    auto g1 = build_proximity_graph(hops, 1);
    EXPECT_EQ(g1.edges(), (Edges{{0, 1}, {1, 2}}));
    auto g2 = build_proximity_graph(hops, 2);
    EXPECT_EQ(g2.edges(), (Edges{{0, 1}, {0, 2}, {1, 2}}));
    EXPECT_TRUE(g2.is_symmetric());
}

TEST(ProximityGraph, RejectsAsymmetricInput) {
    HopMatrix hops{{0, 1}, {2, 0}};
    EXPECT_THROW(build_proximity_graph(hops, 1), ValidationError);
    HopMatrix diag{{1, 1}, {1, 0}};
    EXPECT_THROW(build_proximity_graph(diag, 1), ValidationError);
}

TEST(ProximityGraph, HopsFromTopologyBfs) {
    Edges line{{0, 1}, {1, 2}, {2, 3}};
    auto hops = hop_distances_from_edges(5, line);
    EXPECT_EQ(hops[0][3], 3u);
    EXPECT_EQ(hops[3][0], 3u);
    EXPECT_EQ(hops[0][4], kUnreachable);
    auto g = build_proximity_graph(hops, 4);
    EXPECT_EQ(g.n_edges(), 6u);
    EXPECT_FALSE(g.has_edge(0, 4));
}

TEST(PoiGraph, CosineDecisions) {
    EXPECT_TRUE(build_poi_graph({{3, 1, 2}, {3, 1, 2}}, 1.0).has_edge(0, 1));
    EXPECT_FALSE(build_poi_graph({{1, 0}, {0, 1}}, 0.7).has_edge(0, 1));
    // cos([1,1],[1,0]) = 1/sqrt(2) = 0.70710678...
    EXPECT_NEAR(cosine_similarity(std::vector<double>{1, 1}, std::vector<double>{1, 0}), 1.0 / std::sqrt(2.0), 1e-15);
    EXPECT_TRUE(build_poi_graph({{1, 1}, {1, 0}}, 0.7).has_edge(0, 1));
    EXPECT_FALSE(build_poi_graph({{1, 1}, {1, 0}}, 0.71).has_edge(0, 1));
}

TEST(PoiGraph, ZeroNormNamesStation) {
    std::vector<std::string> names{"Central", "Admiralty"};
    try {
        build_poi_graph({{1, 2}, {0, 0}}, 0.7, names);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("Admiralty"), std::string::npos);
    }
}

TEST(PoiGraph, SymmetricOnRandomInput) {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    std::vector<std::vector<double>> poi(12, std::vector<double>(4));
    for (auto& row : poi)
        for (auto& x : row) x = u(rng) + 0.01;
    EXPECT_TRUE(build_poi_graph(poi, 0.8).is_symmetric());
}

TEST(Communities, TwoDisjointTrianglesMatchExhaustiveOptimum) {
    auto g = make_graph(6, {{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {3, 5}});
    auto [q_opt, opt] = best_partition(g);
    EXPECT_NEAR(q_opt, 0.5, 1e-12);
    auto found = detect_communities(g, 42);
    EXPECT_EQ(found.n_communities, 2u);
    EXPECT_NEAR(found.modularity, 0.5, 1e-12);
    EXPECT_EQ(as_blocks(found.labels), as_blocks(opt));
}

TEST(Communities, CompleteGraphK4) {
    auto g = make_graph(4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}});
    auto [q_opt, opt] = best_partition(g);
    auto found = detect_communities(g, 1);
    EXPECT_NEAR(found.modularity, q_opt, 1e-12);
    EXPECT_NEAR(q_opt, 0.0, 1e-12);
    EXPECT_EQ(found.n_communities, 1u);
}

TEST(Communities, ZeroEdgesGivesSingletons) {
    SemanticGraph g(4, GraphKind::Functional);
    auto c = detect_communities(g, 9);
    EXPECT_EQ(c.n_communities, 4u);
    EXPECT_EQ(c.modularity, 0.0);
}

TEST(Communities, IsolatedNodesStaySingletons) {
    auto g = make_graph(5, {{0, 1}, {1, 2}, {0, 2}});
    auto c = detect_communities(g, 5);
    EXPECT_NE(c.labels[3], c.labels[4]);
    EXPECT_NE(c.labels[3], c.labels[0]);
    EXPECT_EQ(c.labels[0], c.labels[1]);
}

TEST(Communities, MatchesExhaustiveOptimumOnRandomSmallGraphs) {
    std::mt19937 rng(2024);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = 4 + trial % 5;
        SemanticGraph g(n, GraphKind::Proximity);
        std::bernoulli_distribution coin(0.4);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (coin(rng)) g.set_edge(i, j);
        auto [q_opt, opt] = best_partition(g);
        auto found = detect_communities(g, trial);
        EXPECT_NEAR(found.modularity, naive_modularity(g, found.labels), 1e-12);
        // Local optimum at least as good as singletons; on these sizes it reaches the optimum.
        std::vector<std::uint32_t> singletons(n);
        std::iota(singletons.begin(), singletons.end(), 0u);
        EXPECT_GE(found.modularity, naive_modularity(g, singletons) - 1e-12);
        EXPECT_NEAR(found.modularity, q_opt, 1e-9) << "trial " << trial;
    }
}

TEST(Communities, LocalOptimumAndDeterminismOnLargerGraph) {
    // Four planted blocks of 25 nodes: dense inside, sparse across.
    std::mt19937 rng(77);
    const std::size_t n = 100;
    SemanticGraph g(n, GraphKind::Proximity);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double p = (i / 25 == j / 25) ? 0.3 : 0.01;
            if (std::bernoulli_distribution(p)(rng)) g.set_edge(i, j);
        }
    auto a = detect_communities(g, 123);
    auto b = detect_communities(g, 123);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_EQ(a.n_communities, 4u);

    // No single node move and no merge of two communities improves modularity.
    const double q = a.modularity;
    for (std::size_t v = 0; v < n; ++v) {
        for (std::uint32_t c = 0; c <= a.n_communities; ++c) {
            auto moved = a.labels;
            moved[v] = c;
            EXPECT_LE(naive_modularity(g, moved), q + 1e-12);
        }
    }
    for (std::uint32_t x = 0; x < a.n_communities; ++x)
        for (std::uint32_t y = x + 1; y < a.n_communities; ++y) {
            auto merged = a.labels;
            for (auto& l : merged)
                if (l == y) l = x;
            EXPECT_LE(naive_modularity(g, merged), q + 1e-12);
        }
    // Labels contiguous from zero.
    std::set<std::uint32_t> used(a.labels.begin(), a.labels.end());
    EXPECT_EQ(*used.rbegin() + 1, used.size());
}

TEST(Remap, CollapseToSingleSymbol) {
    Corpus c;
    for (auto s : {"A", "B", "C"}) {
        c.vocab[0].add(s);
        c.vocab[1].add(s);
    }
    c.vocab[2].add("08");
    c.documents.emplace_back("p", std::vector<TripWord>{{0, 1, 0}, {2, 0, 0}});
    CommunityLabeling one{{0, 0, 0}, 1, 0.0};
    auto r = remap_corpus(c, one, one);
    EXPECT_EQ(r.vocab_sizes(), (VocabSizes{1, 1, 1}));
    for (const auto& w : r.documents[0].words()) EXPECT_EQ(w, (TripWord{0, 0, 0}));
}

TEST(Remap, ProductEncodingKeepsOccupiedPairs) {
    Corpus c;
    for (auto s : {"A", "B", "C", "D", "E"}) {
        c.vocab[0].add(s);
        c.vocab[1].add(s);
    }
    c.vocab[2].add("08");
    c.vocab[2].add("09");
    c.documents.emplace_back("p", std::vector<TripWord>{{0, 1, 0}, {2, 3, 1}});
    c.documents.emplace_back("q", std::vector<TripWord>{{4, 0, 1}});
    CommunityLabeling adj{{0, 0, 1, 1, 0}, 2, 0.0};
    CommunityLabeling poi{{0, 1, 0, 1, 1}, 2, 0.0};
    auto detailed = remap_corpus_detailed(c, adj, poi);
    // Occupied pairs: A(0,0)=0, B(0,1)=1, C(1,0)=2, D(1,1)=3, E(0,1)=1 -> four distinct.
    EXPECT_EQ(detailed.combined_codes, (std::vector<std::size_t>{0, 1, 2, 3}));
    EXPECT_EQ(detailed.corpus.vocab_sizes()[0], 4u);
    EXPECT_EQ(detailed.corpus.vocab_sizes()[1], 4u);
    EXPECT_EQ(detailed.corpus.documents[1].words()[0], (TripWord{1, 0, 1}));
    EXPECT_EQ(detailed.corpus.total_words(), c.total_words());
    for (std::size_t u = 0; u < c.size(); ++u)
        EXPECT_EQ(detailed.corpus.documents[u].n_words(), c.documents[u].n_words());
}

TEST(Remap, DropsUnoccupiedPairsAndAlignsByName) {
    Corpus c;
    c.vocab[0].add("Y");
    c.vocab[1].add("X");
    c.vocab[2].add("t");
    c.documents.emplace_back("p", std::vector<TripWord>{{0, 0, 0}});
    std::vector<std::string> nodes{"X", "Y", "Z"};
    CommunityLabeling adj{{0, 1, 1}, 2, 0.0};
    CommunityLabeling poi{{0, 0, 1}, 2, 0.0};
    auto r = remap_corpus_detailed(c, adj, poi, nodes);
    // Y -> (1,0) = 2, X -> (0,0) = 0.
    EXPECT_EQ(r.combined_codes, (std::vector<std::size_t>{0, 2}));
    EXPECT_EQ(r.corpus.documents[0].words()[0], (TripWord{1, 0, 0}));

    c.vocab[0].add("Missing");
    c.documents.emplace_back("q", std::vector<TripWord>{{1, 0, 0}});
    EXPECT_THROW(remap_corpus(c, adj, poi, nodes), ValidationError);
}
