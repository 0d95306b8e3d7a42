#pragma once

// Leiden community detection for undirected weighted graphs, optimizing
// Newman-Girvan modularity at resolution 1.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "tdpmm/rng.hpp"

namespace tdpmm::leiden {

/// Adjacency-list graph. Self loops are stored separately; each contributes
/// its weight once to internal weight and twice to the node's degree.
class WeightedGraph {
public:
    explicit WeightedGraph(std::size_t n = 0) : nbrs_(n), self_(n, 0.0), degree_(n, 0.0) {}

    void add_edge(std::size_t a, std::size_t b, double w) {
        if (a == b) {
            self_[a] += w;
            degree_[a] += 2.0 * w;
        } else {
            nbrs_[a].emplace_back(b, w);
            nbrs_[b].emplace_back(a, w);
            degree_[a] += w;
            degree_[b] += w;
        }
        total_ += w;
    }

    std::size_t size() const noexcept { return nbrs_.size(); }
    std::span<const std::pair<std::size_t, double>> neighbors(std::size_t v) const { return nbrs_[v]; }
    double self_loop(std::size_t v) const { return self_[v]; }
    double degree(std::size_t v) const { return degree_[v]; }
    /// m: total edge weight.
    double total_weight() const noexcept { return total_; }

private:
    std::vector<std::vector<std::pair<std::size_t, double>>> nbrs_;
    std::vector<double> self_;
    std::vector<double> degree_;
    double total_ = 0.0;
};

template <typename Label>
double modularity(const WeightedGraph& g, std::span<const Label> labels) {
    const double m = g.total_weight();
    if (m == 0.0) return 0.0;
    const std::size_t n_comm = labels.empty() ? 0 : static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
    std::vector<double> internal(n_comm, 0.0), tot(n_comm, 0.0);
    for (std::size_t v = 0; v < g.size(); ++v) {
        const auto c = static_cast<std::size_t>(labels[v]);
        tot[c] += g.degree(v);
        internal[c] += g.self_loop(v);
        for (auto [u, w] : g.neighbors(v))
            if (static_cast<std::size_t>(labels[u]) == c && u > v) internal[c] += w;
    }
    double q = 0.0;
    for (std::size_t c = 0; c < n_comm; ++c) q += internal[c] / m - (tot[c] / (2.0 * m)) * (tot[c] / (2.0 * m));
    return q;
}

template <typename Label>
double modularity(const WeightedGraph& g, const std::vector<Label>& labels) {
    return modularity(g, std::span<const Label>(labels));
}

namespace detail {

constexpr double kEps = 1e-12;

/// Relabels to 0..k-1 in order of first appearance; returns k.
inline std::size_t renumber(std::vector<std::size_t>& labels) {
    std::vector<std::size_t> map(labels.size() + 1, std::numeric_limits<std::size_t>::max());
    std::size_t next = 0;
    for (auto& l : labels) {
        if (l >= map.size()) map.resize(l + 1, std::numeric_limits<std::size_t>::max());
        if (map[l] == std::numeric_limits<std::size_t>::max()) map[l] = next++;
        l = map[l];
    }
    return next;
}

/// Scratch accumulator for edge weight from one node to each community.
class NeighborWeights {
public:
    explicit NeighborWeights(std::size_t n) : weight_(n, 0.0), seen_(n, false) {}

    void add(std::size_t c, double w) {
        if (!seen_[c]) {
            seen_[c] = true;
            touched_.push_back(c);
        }
        weight_[c] += w;
    }
    double get(std::size_t c) const { return weight_[c]; }
    const std::vector<std::size_t>& touched() const { return touched_; }
    void clear() {
        for (auto c : touched_) {
            weight_[c] = 0.0;
            seen_[c] = false;
        }
        touched_.clear();
    }

private:
    std::vector<double> weight_;
    std::vector<bool> seen_;
    std::vector<std::size_t> touched_;
};

/// Queue-based local moving: each node goes to the community with the largest
/// strictly positive modularity gain. Returns true if any node moved.
inline bool fast_local_move(const WeightedGraph& g, std::vector<std::size_t>& comm, Rng& rng) {
    const std::size_t n = g.size();
    const double two_m = 2.0 * g.total_weight();
    std::vector<double> tot(n, 0.0);
    std::vector<std::size_t> size(n, 0);
    for (std::size_t v = 0; v < n; ++v) {
        tot[comm[v]] += g.degree(v);
        ++size[comm[v]];
    }
    std::vector<std::size_t> empty;
    for (std::size_t c = n; c-- > 0;)
        if (size[c] == 0) empty.push_back(c);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::deque<std::size_t> queue(order.begin(), order.end());
    std::vector<bool> queued(n, true);
    NeighborWeights nw(n);
    bool moved = false;

    while (!queue.empty()) {
        const auto v = queue.front();
        queue.pop_front();
        queued[v] = false;
        const auto cv = comm[v];
        const double kv = g.degree(v);

        nw.clear();
        for (auto [u, w] : g.neighbors(v)) nw.add(comm[u], w);
        tot[cv] -= kv;
        --size[cv];

        std::size_t best = cv;
        double best_gain = nw.get(cv) - kv * tot[cv] / two_m;
        for (auto c : nw.touched()) {
            const double gain = nw.get(c) - kv * tot[c] / two_m;
            if (gain > best_gain + kEps) {
                best_gain = gain;
                best = c;
            }
        }
        if (size[cv] > 0 && best_gain < -kEps && !empty.empty()) best = empty.back();

        if (best != cv) {
            if (best == (empty.empty() ? n : empty.back())) empty.pop_back();
            if (size[cv] == 0) empty.push_back(cv);
            moved = true;
            for (auto [u, w] : g.neighbors(v)) {
                if (!queued[u] && comm[u] != best) {
                    queued[u] = true;
                    queue.push_back(u);
                }
            }
        }
        comm[v] = best;
        tot[best] += kv;
        ++size[best];
    }
    return moved;
}

/// Refinement: merge singletons within each community into well-connected
/// sub-communities, choosing randomly among non-negative gains with
/// probability proportional to exp(gain / theta).
inline std::vector<std::size_t> refine(const WeightedGraph& g, const std::vector<std::size_t>& comm, Rng& rng,
                                       double theta = 0.01) {
    const std::size_t n = g.size();
    const double m = g.total_weight();
    const double two_m = 2.0 * m;
    std::vector<double> comm_tot(n, 0.0);
    for (std::size_t v = 0; v < n; ++v) comm_tot[comm[v]] += g.degree(v);

    std::vector<std::size_t> refined(n);
    std::iota(refined.begin(), refined.end(), 0);
    std::vector<double> r_tot(n), r_ext(n, 0.0);
    std::vector<std::size_t> r_size(n, 1);
    for (std::size_t v = 0; v < n; ++v) {
        r_tot[v] = g.degree(v);
        for (auto [u, w] : g.neighbors(v))
            if (comm[u] == comm[v]) r_ext[v] += w;
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    NeighborWeights nw(n);
    std::vector<std::size_t> candidates;
    std::vector<double> gains;

    for (auto v : order) {
        const auto rv = refined[v];
        if (r_size[rv] != 1) continue;
        const double kv = g.degree(v);
        const double c_tot = comm_tot[comm[v]];
        if (r_ext[rv] < kv * (c_tot - kv) / two_m - kEps) continue;

        nw.clear();
        for (auto [u, w] : g.neighbors(v))
            if (comm[u] == comm[v]) nw.add(refined[u], w);

        candidates.assign(1, rv);
        gains.assign(1, 0.0);
        for (auto t : nw.touched()) {
            if (t == rv) continue;
            if (r_ext[t] < r_tot[t] * (c_tot - r_tot[t]) / two_m - kEps) continue;
            const double gain = (nw.get(t) - kv * r_tot[t] / two_m) / m;
            if (gain < -kEps) continue;
            candidates.push_back(t);
            gains.push_back(gain);
        }
        const double top = *std::max_element(gains.begin(), gains.end());
        double total = 0.0;
        for (auto& x : gains) total += (x = std::exp((x - top) / theta));
        double draw = uniform01(rng) * total;
        std::size_t pick = 0;
        while (pick + 1 < gains.size() && draw >= gains[pick]) draw -= gains[pick++];

        const auto t = candidates[pick];
        if (t == rv) continue;
        r_ext[t] = r_ext[t] + r_ext[rv] - 2.0 * nw.get(t);
        r_tot[t] += kv;
        ++r_size[t];
        r_size[rv] = 0;
        refined[v] = t;
    }
    return refined;
}

/// Collapses `groups` into nodes; returns the aggregate graph.
inline WeightedGraph aggregate(const WeightedGraph& g, const std::vector<std::size_t>& groups, std::size_t n_groups) {
    WeightedGraph agg(n_groups);
    for (std::size_t v = 0; v < g.size(); ++v) {
        if (g.self_loop(v) != 0.0) agg.add_edge(groups[v], groups[v], g.self_loop(v));
        for (auto [u, w] : g.neighbors(v))
            if (u > v) agg.add_edge(groups[v], groups[u], w);
    }
    return agg;
}

/// Node-level best moves on the original graph, deterministic order. Returns
/// true if anything moved.
inline bool polish_moves(const WeightedGraph& g, std::vector<std::size_t>& comm) {
    const std::size_t n = g.size();
    const double two_m = 2.0 * g.total_weight();
    std::vector<double> tot(n, 0.0);
    std::vector<std::size_t> size(n, 0);
    for (std::size_t v = 0; v < n; ++v) {
        tot[comm[v]] += g.degree(v);
        ++size[comm[v]];
    }
    NeighborWeights nw(n);
    bool any = false;
    for (bool changed = true; changed;) {
        changed = false;
        for (std::size_t v = 0; v < n; ++v) {
            const auto cv = comm[v];
            const double kv = g.degree(v);
            nw.clear();
            for (auto [u, w] : g.neighbors(v)) nw.add(comm[u], w);
            tot[cv] -= kv;
            --size[cv];
            std::size_t best = cv;
            double best_gain = nw.get(cv) - kv * tot[cv] / two_m;
            for (auto c : nw.touched()) {
                const double gain = nw.get(c) - kv * tot[c] / two_m;
                if (gain > best_gain + kEps) {
                    best_gain = gain;
                    best = c;
                }
            }
            if (best_gain < -kEps && size[cv] > 0) {
                for (std::size_t c = 0; c < n; ++c)
                    if (size[c] == 0) {
                        best = c;
                        break;
                    }
            }
            if (best != cv) changed = any = true;
            comm[v] = best;
            tot[best] += kv;
            ++size[best];
        }
    }
    return any;
}

/// Repeatedly merges the pair of adjacent communities with the largest
/// positive modularity gain. Returns true if any merge happened.
inline bool polish_merges(const WeightedGraph& g, std::vector<std::size_t>& comm) {
    bool any = false;
    while (true) {
        const std::size_t k = renumber(comm);
        const auto agg = aggregate(g, comm, k);
        const double two_m = 2.0 * g.total_weight();
        double best_gain = kEps;
        std::pair<std::size_t, std::size_t> best{0, 0};
        bool found = false;
        for (std::size_t a = 0; a < k; ++a) {
            NeighborWeights nw(k);
            for (auto [b, w] : agg.neighbors(a)) nw.add(b, w);
            for (auto b : nw.touched()) {
                if (b <= a) continue;
                const double gain = nw.get(b) - agg.degree(a) * agg.degree(b) / two_m;
                if (gain > best_gain) {
                    best_gain = gain;
                    best = {a, b};
                    found = true;
                }
            }
        }
        if (!found) return any;
        for (auto& c : comm)
            if (c == best.second) c = best.first;
        any = true;
    }
}

}  // namespace detail

/// Full Leiden optimization followed by polishing. Labels are contiguous from
/// 0 in order of first appearance by node index.
inline std::vector<std::uint32_t> optimize(const WeightedGraph& g0, std::uint64_t seed, int max_rounds = 100) {
    const std::size_t n0 = g0.size();
    std::vector<std::size_t> membership(n0);
    std::iota(membership.begin(), membership.end(), 0);
    if (g0.total_weight() == 0.0 || n0 == 0) return {membership.begin(), membership.end()};

    Rng rng(seed);
    double best_q = modularity(g0, membership);
    for (int round = 0; round < max_rounds; ++round) {
        WeightedGraph g = g0;
        std::vector<std::size_t> comm = membership;
        std::vector<std::size_t> node_of(n0);
        std::iota(node_of.begin(), node_of.end(), 0);

        while (true) {
            detail::fast_local_move(g, comm, rng);
            const std::size_t k = detail::renumber(comm);
            if (k == g.size()) break;
            auto refined = detail::refine(g, comm, rng);
            std::size_t k_ref = detail::renumber(refined);
            if (k_ref == g.size()) {
                refined = comm;
                k_ref = k;
            }
            std::vector<std::size_t> next_comm(k_ref);
            for (std::size_t v = 0; v < g.size(); ++v) next_comm[refined[v]] = comm[v];
            g = detail::aggregate(g, refined, k_ref);
            for (auto& x : node_of) x = refined[x];
            comm = std::move(next_comm);
        }

        std::vector<std::size_t> candidate(n0);
        for (std::size_t v = 0; v < n0; ++v) candidate[v] = comm[node_of[v]];
        bool polished = true;
        while (polished) {
            polished = detail::polish_moves(g0, candidate);
            polished = detail::polish_merges(g0, candidate) || polished;
        }
        detail::renumber(candidate);
        const double q = modularity(g0, candidate);
        const bool improved = q > best_q + detail::kEps;
        if (q >= best_q - detail::kEps) {
            membership = std::move(candidate);
            best_q = std::max(best_q, q);
        }
        if (!improved) break;
    }
    detail::renumber(membership);
    return {membership.begin(), membership.end()};
}

}  // namespace tdpmm::leiden
