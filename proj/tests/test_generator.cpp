#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <map>
#include <set>
#include <numeric>

#include "tdpmm/generator.hpp"

using namespace tdpmm;

namespace {

GenerativeSpec single_cluster_spec(std::size_t m, std::uint64_t seed) {
    GenerativeSpec s;
    s.vocab = {5, 5, 5};
    s.m = m;
    s.mean_length = 10.0;
    s.seed = seed;
    s.theta = {1.0};
    s.phi[0] = {{0.4, 0.3, 0.15, 0.1, 0.05}};
    s.phi[1] = {{0.2, 0.2, 0.2, 0.2, 0.2}};
    s.phi[2] = {{0.05, 0.05, 0.1, 0.3, 0.5}};
    return s;
}

GenerativeSpec dp_spec(std::size_t m, double alpha, std::uint64_t seed) {
    GenerativeSpec s;
    s.mode = GenMode::Infinite;
    s.vocab = {4, 4, 4};
    s.m = m;
    s.mean_length = 1.0;
    s.alpha = alpha;
    s.seed = seed;
    return s;
}

}  // namespace

TEST(FiniteCorpus, SingleClusterMatchesCategoricalLaw) {
    auto spec = single_cluster_spec(10000, 42);
    auto s = sample_finite_corpus(spec);
    for (auto l : s.labels) EXPECT_EQ(l, 0u);
    ASSERT_GE(s.corpus.total_words(), 90000u);
    // Pearson chi-square, df = 4, critical value at the 0.01 level.
    const double critical = 13.2767;
    for (std::size_t d = 0; d < kNumDims; ++d) {
        std::vector<double> observed(5, 0.0);
        for (const auto& doc : s.corpus.documents)
            for (const auto& w : doc.words()) observed[w[d]] += 1.0;
        const double n = std::accumulate(observed.begin(), observed.end(), 0.0);
        double chi2 = 0.0;
        for (std::size_t w = 0; w < 5; ++w) {
            const double e = n * spec.phi[d][0][w];
            chi2 += (observed[w] - e) * (observed[w] - e) / e;
        }
        EXPECT_LT(chi2, critical) << kDimNames[d];
    }
}

TEST(FiniteCorpus, ZeroWeightClusterNeverSampled) {
    auto spec = planted_spec(2, 2000, 3.0, {4, 4, 4}, 2, 0.9, 3);
    spec.theta = {1.0, 0.0};
    auto s = sample_finite_corpus(spec);
    for (auto l : s.labels) EXPECT_EQ(l, 0u);
}

TEST(FiniteCorpus, DeterministicUnderSeed) {
    auto spec = planted_spec(3, 100, 5.0, {9, 9, 9}, 3, 0.8, 17);
    auto a = sample_finite_corpus(spec);
    auto b = sample_finite_corpus(spec);
    EXPECT_EQ(a.corpus, b.corpus);
    EXPECT_EQ(a.labels, b.labels);
    spec.seed = 18;
    EXPECT_FALSE(sample_finite_corpus(spec).corpus == a.corpus);
}

TEST(FiniteCorpus, LengthLawIsShiftedPoisson) {
    auto spec = single_cluster_spec(20000, 8);
    spec.mean_length = 4.0;
    auto s = sample_finite_corpus(spec);
    double sum = 0.0, sq = 0.0;
    for (const auto& d : s.corpus.documents) {
        ASSERT_GE(d.n_words(), 1u);
        sum += static_cast<double>(d.n_words());
        sq += static_cast<double>(d.n_words() * d.n_words());
    }
    const double n = static_cast<double>(s.corpus.size());
    const double mean = sum / n;
    // Var = mean - 1 = 3 for 1 + Poisson(3).
    EXPECT_NEAR(mean, 4.0, 3 * std::sqrt(3.0 / n));
    EXPECT_NEAR(sq / n - mean * mean, 3.0, 0.15);
}

TEST(FiniteCorpus, OutputPassesCorpusInvariants) {
    auto s = sample_finite_corpus(planted_spec(5, 300, 8.0, {20, 20, 24}, 4, 0.9, 1));
    EXPECT_NO_THROW(s.corpus.validate());
    EXPECT_EQ(s.corpus.vocab_sizes(), (VocabSizes{20, 20, 24}));
    EXPECT_EQ(s.labels.size(), 300u);
}

TEST(FiniteCorpus, MalformedSpecRejected) {
    auto spec = single_cluster_spec(10, 1);
    spec.theta = {0.5};
    EXPECT_THROW(sample_finite_corpus(spec), ValidationError);
    spec = single_cluster_spec(10, 1);
    spec.phi[1][0][0] = -0.2;
    spec.phi[1][0][1] = 0.6;
    EXPECT_THROW(sample_finite_corpus(spec), ValidationError);
    spec = single_cluster_spec(10, 1);
    spec.phi[2][0].pop_back();
    EXPECT_THROW(sample_finite_corpus(spec), ValidationError);
    spec = single_cluster_spec(0, 1);
    EXPECT_THROW(sample_finite_corpus(spec), ValidationError);
    EXPECT_THROW(sample_dp_corpus(single_cluster_spec(10, 1)), ValidationError);
}

TEST(PlantedSpec, MajorityWordIsBijective) {
    const std::size_t k = 5;
    auto s = sample_finite_corpus(planted_spec(k, 500, 8.0, {20, 20, 24}, 4, 0.9, 2));
    for (std::size_t d = 0; d < kNumDims; ++d) {
        std::vector<std::map<std::uint32_t, std::size_t>> freq(k);
        for (std::size_t u = 0; u < s.corpus.size(); ++u)
            for (const auto& w : s.corpus.documents[u].words()) ++freq[s.labels[u]][w[d]];
        std::set<std::uint32_t> majority;
        for (const auto& f : freq) {
            auto best = std::max_element(f.begin(), f.end(), [](auto& a, auto& b) { return a.second < b.second; });
            majority.insert(best->first);
        }
        EXPECT_EQ(majority.size(), k) << kDimNames[d];
    }
}

TEST(Dirichlet, OnSimplexAndMeanMatches) {
    Rng rng(5);
    std::vector<double> mean(6, 0.0);
    const int n = 4000;
    for (int i = 0; i < n; ++i) {
        auto x = sample_dirichlet(6, 0.01, rng);
        EXPECT_NEAR(std::accumulate(x.begin(), x.end(), 0.0), 1.0, 1e-12);
        for (std::size_t j = 0; j < 6; ++j) {
            ASSERT_TRUE(std::isfinite(x[j]));
            mean[j] += x[j] / n;
        }
    }
    // Symmetric prior: each coordinate has mean 1/6 and variance about 0.137 at concentration 0.01.
    for (double m : mean) EXPECT_NEAR(m, 1.0 / 6.0, 4 * std::sqrt(0.14 / n));
}

TEST(DpCorpus, SinglePassengerOpensOneTable) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto s = sample_dp_corpus(dp_spec(1, 3.0, seed));
        EXPECT_EQ(s.n_tables(), 1u);
        EXPECT_EQ(s.labels, (std::vector<std::uint32_t>{0}));
    }
}

TEST(DpCorpus, TinyAlphaGivesOneTable) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) EXPECT_EQ(sample_dp_corpus(dp_spec(100, 1e-9, seed)).n_tables(), 1u);
}

TEST(DpCorpus, FirstTableSizeMatchesEnumeration) {
    // Exact law for M = 3, alpha = 1. Customer 2 joins table 1 w.p. 1/2;
    // customer 3 joins a table of size s w.p. s/3 and opens one w.p. 1/3.
    std::map<std::size_t, double> exact;
    exact[3] = 0.5 * (2.0 / 3.0);
    exact[2] = 0.5 * (1.0 / 3.0) + 0.5 * (1.0 / 3.0);
    exact[1] = 0.5 * (1.0 / 3.0 + 1.0 / 3.0);
    ASSERT_NEAR(exact[1] + exact[2] + exact[3], 1.0, 1e-15);

    const int reps = 30000;
    std::map<std::size_t, int> hits;
    for (int i = 0; i < reps; ++i) {
        auto s = sample_dp_corpus(dp_spec(3, 1.0, 1000 + i));
        ++hits[static_cast<std::size_t>(std::count(s.labels.begin(), s.labels.end(), 0u))];
    }
    for (auto [size, p] : exact) {
        const double se = std::sqrt(p * (1 - p) / reps);
        EXPECT_NEAR(hits[size] / static_cast<double>(reps), p, 4 * se) << "size " << size;
    }
}

TEST(DpCorpus, ExpectedTableCountSum) {
    EXPECT_DOUBLE_EQ(crp_expected_tables(1, 0.3), 1.0);
    EXPECT_NEAR(crp_expected_tables(3, 1.0), 1.0 + 0.5 + 1.0 / 3.0, 1e-15);
    const int reps = 1500;
    for (double alpha : {0.5, 2.0}) {
        double sum = 0.0, sq = 0.0;
        for (int i = 0; i < reps; ++i) {
            const double k = static_cast<double>(sample_dp_corpus(dp_spec(100, alpha, 7 + i)).n_tables());
            sum += k;
            sq += k * k;
        }
        const double mean = sum / reps;
        const double se = std::sqrt((sq / reps - mean * mean) / reps);
        EXPECT_NEAR(mean, crp_expected_tables(100, alpha), 3 * se) << "alpha " << alpha;
    }
}

TEST(DpCorpus, LabelsAreTableIndicesInOpeningOrder) {
    auto s = sample_dp_corpus(dp_spec(300, 2.0, 9));
    std::uint32_t next = 0;
    for (auto l : s.labels) {
        ASSERT_LE(l, next);
        if (l == next) ++next;
    }
    EXPECT_EQ(next, s.n_tables());
    for (std::size_t d = 0; d < kNumDims; ++d) EXPECT_EQ(s.phi[d].size(), s.n_tables());
}
