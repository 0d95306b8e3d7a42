#pragma once

// Synthetic corpora drawn from the finite (Dirichlet multinomial mixture) and
// infinite (Chinese restaurant process) generative processes, with labels.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tdpmm/corpus.hpp"
#include "tdpmm/error.hpp"
#include "tdpmm/rng.hpp"

namespace tdpmm {

enum class GenMode { Finite, Infinite };

/// Per-dimension topic matrices: phi[dim][k] is a distribution over V_dim words.
using TopicSet = std::array<std::vector<std::vector<double>>, kNumDims>;

struct GenerativeSpec {
    GenMode mode = GenMode::Finite;
    VocabSizes vocab{20, 20, 24};
    std::size_t m = 100;
    /// Document length is 1 + Poisson(mean_length - 1).
    double mean_length = 8.0;
    std::uint64_t seed = 1;

    // Finite mode.
    std::vector<double> theta;
    TopicSet phi;

    // Infinite mode: CRP concentration and per-dimension Dirichlet prior for
    // topics drawn when a table opens.
    double alpha = 1.0;
    std::array<double, kNumDims> beta{0.1, 0.1, 0.1};

    std::size_t k_true() const { return theta.size(); }

    void validate() const {
        auto bad = [](const std::string& what) { return ValidationError("generator", what); };
        if (m < 1) throw bad("M must be at least 1");
        if (!(mean_length >= 1.0) || !std::isfinite(mean_length)) throw bad("mean document length must be >= 1");
        for (auto v : vocab)
            if (v < 1) throw bad("vocabulary sizes must be positive");
        if (mode == GenMode::Infinite) {
            if (!(alpha > 0.0)) throw bad("alpha must be positive");
            for (auto b : beta)
                if (!(b > 0.0)) throw bad("beta must be positive");
            return;
        }
        if (theta.empty()) throw bad("theta is empty");
        auto check_simplex = [&](std::span<const double> p, const std::string& name) {
            double sum = 0.0;
            for (double x : p) {
                if (!(x >= 0.0) || !std::isfinite(x)) throw bad(name + " has a negative or non-finite entry");
                sum += x;
            }
            if (std::abs(sum - 1.0) > 1e-9) throw bad(name + " does not sum to 1");
        };
        check_simplex(theta, "theta");
        for (std::size_t d = 0; d < kNumDims; ++d) {
            if (phi[d].size() != theta.size()) throw bad(std::string("phi_") + kDimNames[d] + " needs one row per cluster");
            for (std::size_t k = 0; k < phi[d].size(); ++k) {
                if (phi[d][k].size() != vocab[d]) throw bad(std::string("phi_") + kDimNames[d] + " row has wrong length");
                check_simplex(phi[d][k], std::string("phi_") + kDimNames[d] + " row " + std::to_string(k));
            }
        }
    }
};

struct SyntheticCorpus {
    Corpus corpus;
    std::vector<std::uint32_t> labels;
    /// Topics actually used (the drawn ones in infinite mode).
    TopicSet phi;
    std::size_t n_tables() const { return phi[0].size(); }
};

namespace detail {

inline Corpus empty_synthetic_corpus(const VocabSizes& vocab) {
    Corpus c;
    const std::array<const char*, kNumDims> prefix{"o", "d", "t"};
    for (std::size_t d = 0; d < kNumDims; ++d)
        for (std::size_t i = 0; i < vocab[d]; ++i) c.vocab[d].add(prefix[d] + std::to_string(i));
    return c;
}

inline std::size_t draw_length(double mean, Rng& rng) {
    if (mean <= 1.0) return 1;
    return 1 + static_cast<std::size_t>(std::poisson_distribution<long>(mean - 1.0)(rng));
}

inline Document draw_document(std::size_t u, std::size_t k,
                              std::array<std::vector<std::discrete_distribution<std::uint32_t>>, kNumDims>& samplers,
                              double mean_length, Rng& rng) {
    const auto n = draw_length(mean_length, rng);
    std::vector<TripWord> words(n);
    for (auto& w : words) {
        w.origin = samplers[0][k](rng);
        w.destination = samplers[1][k](rng);
        w.time_slot = samplers[2][k](rng);
    }
    return Document("u" + std::to_string(u), std::move(words));
}

}  // namespace detail

/// Symmetric Dirichlet draw computed in log space, so tiny concentrations
/// do not underflow to an all-zero vector.
inline std::vector<double> sample_dirichlet(std::size_t dim, double concentration, Rng& rng) {
    std::vector<double> logs(dim);
    std::gamma_distribution<double> g(concentration + 1.0, 1.0);
    for (auto& x : logs) {
        double u = uniform01(rng);
        while (u == 0.0) u = uniform01(rng);
        x = std::log(g(rng)) + std::log(u) / concentration;
    }
    const double top = *std::max_element(logs.begin(), logs.end());
    double sum = 0.0;
    for (auto& x : logs) sum += (x = std::exp(x - top));
    for (auto& x : logs) x /= sum;
    return logs;
}

/// Finite mixture: z_u ~ Multi(theta), N_u ~ 1 + Poisson(mean - 1), each trip's
/// components drawn independently from phi_{z_u}.
inline SyntheticCorpus sample_finite_corpus(const GenerativeSpec& spec) {
    if (spec.mode != GenMode::Finite) throw ValidationError("generator", "spec is not in finite mode");
    spec.validate();
    Rng rng(spec.seed);
    std::discrete_distribution<std::uint32_t> pick(spec.theta.begin(), spec.theta.end());
    std::array<std::vector<std::discrete_distribution<std::uint32_t>>, kNumDims> samplers;
    for (std::size_t d = 0; d < kNumDims; ++d)
        for (const auto& row : spec.phi[d]) samplers[d].emplace_back(row.begin(), row.end());

    SyntheticCorpus out{detail::empty_synthetic_corpus(spec.vocab), {}, spec.phi};
    out.labels.reserve(spec.m);
    for (std::size_t u = 0; u < spec.m; ++u) {
        const auto k = pick(rng);
        out.labels.push_back(k);
        out.corpus.documents.push_back(detail::draw_document(u, k, samplers, spec.mean_length, rng));
    }
    return out;
}

/// Infinite mixture realized by sequential CRP seating: passenger i joins
/// table k with probability n_k / (i + alpha) or opens a new table with
/// probability alpha / (i + alpha); a new table draws its topics from Dir(beta).
inline SyntheticCorpus sample_dp_corpus(const GenerativeSpec& spec) {
    if (spec.mode != GenMode::Infinite) throw ValidationError("generator", "spec is not in infinite mode");
    spec.validate();
    Rng rng(spec.seed);
    SyntheticCorpus out{detail::empty_synthetic_corpus(spec.vocab), {}, {}};
    std::vector<std::size_t> table_sizes;
    std::array<std::vector<std::discrete_distribution<std::uint32_t>>, kNumDims> samplers;
    for (std::size_t i = 0; i < spec.m; ++i) {
        double draw = uniform01(rng) * (static_cast<double>(i) + spec.alpha);
        std::size_t k = 0;
        while (k < table_sizes.size() && draw >= static_cast<double>(table_sizes[k])) draw -= static_cast<double>(table_sizes[k++]);
        if (k == table_sizes.size()) {
            table_sizes.push_back(0);
            for (std::size_t d = 0; d < kNumDims; ++d) {
                out.phi[d].push_back(sample_dirichlet(spec.vocab[d], spec.beta[d], rng));
                samplers[d].emplace_back(out.phi[d].back().begin(), out.phi[d].back().end());
            }
        }
        ++table_sizes[k];
        out.labels.push_back(static_cast<std::uint32_t>(k));
        out.corpus.documents.push_back(detail::draw_document(i, k, samplers, spec.mean_length, rng));
    }
    return out;
}

/// E[K] for CRP with M customers: sum_{i=1}^{M} alpha / (alpha + i - 1).
inline double crp_expected_tables(std::size_t m, double alpha) {
    double e = 0.0;
    for (std::size_t i = 1; i <= m; ++i) e += alpha / (alpha + static_cast<double>(i) - 1.0);
    return e;
}

/// Finite spec with K well-separated clusters: in every dimension cluster k
/// puts `mass` evenly on its own block of `words_per_cluster` words and spreads
/// the rest evenly over all other words. Mixture weights are uniform.
inline GenerativeSpec planted_spec(std::size_t k, std::size_t m, double mean_length, const VocabSizes& vocab,
                                   std::size_t words_per_cluster, double mass, std::uint64_t seed) {
    GenerativeSpec spec;
    spec.mode = GenMode::Finite;
    spec.vocab = vocab;
    spec.m = m;
    spec.mean_length = mean_length;
    spec.seed = seed;
    spec.theta.assign(k, 1.0 / static_cast<double>(k));
    for (std::size_t d = 0; d < kNumDims; ++d) {
        if (k * words_per_cluster > vocab[d])
            throw ValidationError("generator", std::string("planted word blocks do not fit in the ") + kDimNames[d] +
                                                   " vocabulary");
        const std::size_t rest = vocab[d] - words_per_cluster;
        for (std::size_t c = 0; c < k; ++c) {
            std::vector<double> row(vocab[d], rest ? (1.0 - mass) / static_cast<double>(rest) : 0.0);
            const double peak = (rest ? mass : 1.0) / static_cast<double>(words_per_cluster);
            for (std::size_t w = c * words_per_cluster; w < (c + 1) * words_per_cluster; ++w) row[w] = peak;
            spec.phi[d].push_back(std::move(row));
        }
    }
    return spec;
}

/// passenger_id,true_cluster
inline void write_labels(std::ostream& out, const Corpus& corpus, std::span<const std::uint32_t> labels) {
    out << "passenger_id,true_cluster\n";
    for (std::size_t u = 0; u < corpus.size(); ++u) out << corpus.documents[u].passenger_id() << ',' << labels[u] << '\n';
}

}  // namespace tdpmm
