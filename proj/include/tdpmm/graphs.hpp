#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tdpmm/corpus.hpp"
#include "tdpmm/error.hpp"
#include "tdpmm/leiden.hpp"
#include "tdpmm/rng.hpp"
#include "tdpmm/text.hpp"

namespace tdpmm {

enum class GraphKind { Proximity, Functional };

/// Symmetric binary station graph. The diagonal is never an edge.
class SemanticGraph {
public:
    SemanticGraph(std::size_t n_nodes, GraphKind kind) : n_(n_nodes), kind_(kind), adj_(n_nodes * n_nodes, 0) {}

    std::size_t n_nodes() const noexcept { return n_; }
    GraphKind kind() const noexcept { return kind_; }

    bool has_edge(std::size_t i, std::size_t j) const { return adj_[i * n_ + j] != 0; }

    void set_edge(std::size_t i, std::size_t j) {
        if (i == j) return;
        adj_[i * n_ + j] = 1;
        adj_[j * n_ + i] = 1;
    }

    std::size_t n_edges() const {
        return static_cast<std::size_t>(std::count(adj_.begin(), adj_.end(), std::uint8_t{1})) / 2;
    }

    std::vector<std::pair<std::size_t, std::size_t>> edges() const {
        std::vector<std::pair<std::size_t, std::size_t>> out;
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = i + 1; j < n_; ++j)
                if (has_edge(i, j)) out.emplace_back(i, j);
        return out;
    }

    bool is_symmetric() const {
        for (std::size_t i = 0; i < n_; ++i) {
            if (adj_[i * n_ + i] != 0) return false;
            for (std::size_t j = i + 1; j < n_; ++j)
                if (adj_[i * n_ + j] != adj_[j * n_ + i]) return false;
        }
        return true;
    }

    friend bool operator==(const SemanticGraph&, const SemanticGraph&) = default;

private:
    std::size_t n_;
    GraphKind kind_;
    std::vector<std::uint8_t> adj_;
};

struct CommunityLabeling {
    std::vector<std::uint32_t> labels;
    std::size_t n_communities = 0;
    double modularity = 0.0;
};

inline constexpr std::size_t kUnreachable = std::numeric_limits<std::size_t>::max();

using HopMatrix = std::vector<std::vector<std::size_t>>;

/// Edge (i, j) iff hops[i][j] <= h and i != j.
inline SemanticGraph build_proximity_graph(const HopMatrix& hops, std::size_t h) {
    const std::size_t n = hops.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (hops[i].size() != n) throw ValidationError("graphs", "hop-distance matrix is not square");
        if (hops[i][i] != 0) throw ValidationError("graphs", "hop-distance matrix has nonzero diagonal at row " + std::to_string(i));
    }
    SemanticGraph g(n, GraphKind::Proximity);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (hops[i][j] != hops[j][i])
                throw ValidationError("graphs", "hop-distance matrix is not symmetric at (" + std::to_string(i) + ", " +
                                                    std::to_string(j) + ")");
            if (hops[i][j] <= h) g.set_edge(i, j);
        }
    }
    return g;
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        dot += a[k] * b[k];
        na += a[k] * a[k];
        nb += b[k] * b[k];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Edge (i, j) iff cos(poi_i, poi_j) >= gamma and i != j. `names` only feeds
/// error messages.
inline SemanticGraph build_poi_graph(const std::vector<std::vector<double>>& poi, double gamma,
                                     std::span<const std::string> names = {}) {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ValidationError("graphs", "gamma must lie in (0, 1]");
    const std::size_t n = poi.size();
    auto station = [&](std::size_t i) { return i < names.size() ? "'" + names[i] + "'" : "#" + std::to_string(i); };
    for (std::size_t i = 0; i < n; ++i) {
        if (poi[i].size() != (n ? poi[0].size() : 0))
            throw ValidationError("graphs", "POI matrix rows have different lengths");
        double norm = 0.0;
        for (double v : poi[i]) {
            if (!(v >= 0.0) || !std::isfinite(v))
                throw ValidationError("graphs", "POI row for station " + station(i) + " has a negative or non-finite entry");
            norm += v * v;
        }
        if (norm == 0.0) throw ValidationError("graphs", "POI row for station " + station(i) + " has zero norm");
    }
    SemanticGraph g(n, GraphKind::Functional);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (cosine_similarity(poi[i], poi[j]) >= gamma) g.set_edge(i, j);
    return g;
}

/// BFS hop distances over an undirected station topology.
inline HopMatrix hop_distances_from_edges(std::size_t n_nodes,
                                          std::span<const std::pair<std::size_t, std::size_t>> edges) {
    std::vector<std::vector<std::size_t>> nbrs(n_nodes);
    for (auto [a, b] : edges) {
        if (a >= n_nodes || b >= n_nodes) throw ValidationError("graphs", "topology edge references unknown station");
        if (a == b) continue;
        nbrs[a].push_back(b);
        nbrs[b].push_back(a);
    }
    HopMatrix dist(n_nodes, std::vector<std::size_t>(n_nodes, kUnreachable));
    for (std::size_t s = 0; s < n_nodes; ++s) {
        auto& d = dist[s];
        std::deque<std::size_t> queue{s};
        d[s] = 0;
        while (!queue.empty()) {
            auto v = queue.front();
            queue.pop_front();
            for (auto u : nbrs[v]) {
                if (d[u] == kUnreachable) {
                    d[u] = d[v] + 1;
                    queue.push_back(u);
                }
            }
        }
    }
    return dist;
}

inline leiden::WeightedGraph to_weighted(const SemanticGraph& g) {
    leiden::WeightedGraph wg(g.n_nodes());
    for (auto [i, j] : g.edges()) wg.add_edge(i, j, 1.0);
    return wg;
}

/// Newman-Girvan modularity of `labels` on `g`.
inline double modularity(const SemanticGraph& g, std::span<const std::uint32_t> labels) {
    return leiden::modularity(to_weighted(g), labels);
}

/// Modularity-maximizing partition via Leiden (local moving, refinement,
/// aggregation), finished by node-move and community-merge polishing so the
/// result is a local optimum under both move types. Deterministic in (graph, seed).
inline CommunityLabeling detect_communities(const SemanticGraph& g, std::uint64_t seed) {
    if (g.n_nodes() == 0) throw ValidationError("graphs", "graph has no nodes");
    const auto wg = to_weighted(g);
    CommunityLabeling out;
    out.labels = leiden::optimize(wg, seed);
    out.n_communities = out.labels.empty() ? 0 : *std::max_element(out.labels.begin(), out.labels.end()) + 1;
    out.modularity = leiden::modularity(wg, out.labels);
    return out;
}

/// A matrix with station names on both axes (or rows only, for POI tables).
struct NamedMatrix {
    std::vector<std::string> row_names;
    std::vector<std::string> column_names;
    std::vector<std::vector<double>> values;
};

/// Delimiter-separated matrix with a header row; first column holds row names.
/// "inf" (any case) or an empty cell parses as +infinity.
inline NamedMatrix read_named_matrix(const std::string& path, char delim = ',') {
    auto in = text::open_input(path, "graphs");
    NamedMatrix m;
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("graphs", path + ": empty matrix file");
    auto header = text::split(line, delim);
    if (header.size() < 2) throw ValidationError("graphs", path + ": header needs at least two columns");
    m.column_names.assign(header.begin() + 1, header.end());
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        auto f = text::split(line, delim);
        if (f.size() != header.size())
            throw ValidationError("graphs", path + ":" + std::to_string(line_no) + ": expected " +
                                                std::to_string(header.size()) + " fields");
        m.row_names.push_back(f[0]);
        std::vector<double> row;
        for (std::size_t k = 1; k < f.size(); ++k) {
            std::string cell = f[k];
            std::transform(cell.begin(), cell.end(), cell.begin(), [](unsigned char c) { return std::tolower(c); });
            if (cell.empty() || cell == "inf") {
                row.push_back(std::numeric_limits<double>::infinity());
                continue;
            }
            auto v = text::parse_number<double>(cell);
            if (!v) throw ValidationError("graphs", path + ":" + std::to_string(line_no) + ": bad number '" + f[k] + "'");
            row.push_back(*v);
        }
        m.values.push_back(std::move(row));
    }
    return m;
}

/// Hop matrix file: square, row names identical to column names.
inline std::pair<std::vector<std::string>, HopMatrix> read_hop_matrix(const std::string& path, char delim = ',') {
    auto m = read_named_matrix(path, delim);
    if (m.row_names != m.column_names)
        throw ValidationError("graphs", path + ": row names must match the header station names in order");
    HopMatrix hops(m.values.size());
    for (std::size_t i = 0; i < m.values.size(); ++i) {
        for (double v : m.values[i]) {
            if (std::isinf(v)) {
                hops[i].push_back(kUnreachable);
                continue;
            }
            if (v < 0 || v != std::floor(v))
                throw ValidationError("graphs", path + ": hop distances must be nonnegative integers");
            hops[i].push_back(static_cast<std::size_t>(v));
        }
    }
    return {std::move(m.row_names), std::move(hops)};
}

/// Edge-list topology file with header row; each line "station_a,station_b".
inline std::pair<std::vector<std::string>, HopMatrix> read_topology(const std::string& path, char delim = ',') {
    auto in = text::open_input(path, "graphs");
    std::string line;
    std::getline(in, line);
    Vocabulary names;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        auto f = text::split(line, delim);
        if (f.size() != 2) throw ValidationError("graphs", path + ": topology lines need exactly two stations");
        edges.emplace_back(names.add(f[0]), names.add(f[1]));
    }
    auto hops = hop_distances_from_edges(names.size(), edges);
    return {names.labels(), std::move(hops)};
}

/// Result of mapping stations onto combined (proximity, functional) communities.
struct CommunityRemap {
    Corpus corpus;
    /// combined index adj * S_poi + poi for each occupied pair, in the order of
    /// the new spatial vocabulary.
    std::vector<std::size_t> combined_codes;
};

/// Replaces origin and destination words by combined community indices
/// adj[s] * S_poi + poi[s], keeping only pairs that occur (dense, ascending).
/// With `node_names` empty, corpus station indices index the labelings directly;
/// otherwise corpus labels are looked up by name in `node_names`.
inline CommunityRemap remap_corpus_detailed(const Corpus& corpus, const CommunityLabeling& adj,
                                            const CommunityLabeling& poi,
                                            std::span<const std::string> node_names = {}) {
    if (!node_names.empty() && (node_names.size() != adj.labels.size() || node_names.size() != poi.labels.size()))
        throw ValidationError("graphs", "node names do not match labeling sizes");
    std::unordered_map<std::string, std::size_t> by_name;
    for (std::size_t i = 0; i < node_names.size(); ++i) by_name.emplace(node_names[i], i);

    std::array<std::vector<std::size_t>, 2> code;  // per spatial dim: old index -> combined code
    for (std::size_t dim = 0; dim < 2; ++dim) {
        const auto& vocab = corpus.vocab[dim];
        code[dim].resize(vocab.size());
        for (std::size_t s = 0; s < vocab.size(); ++s) {
            std::size_t node = s;
            if (!node_names.empty()) {
                auto it = by_name.find(vocab.label(s));
                if (it == by_name.end())
                    throw ValidationError("graphs", "mapping error: station '" + vocab.label(s) + "' has no community label");
                node = it->second;
            }
            if (node >= adj.labels.size() || node >= poi.labels.size())
                throw ValidationError("graphs", "mapping error: station '" + vocab.label(s) + "' has no community label");
            code[dim][s] = static_cast<std::size_t>(adj.labels[node]) * poi.n_communities + poi.labels[node];
        }
    }

    std::vector<std::size_t> occupied;
    for (const auto& doc : corpus.documents)
        for (const auto& w : doc.words()) {
            occupied.push_back(code[0][w.origin]);
            occupied.push_back(code[1][w.destination]);
        }
    std::sort(occupied.begin(), occupied.end());
    occupied.erase(std::unique(occupied.begin(), occupied.end()), occupied.end());
    auto dense = [&](std::size_t c) {
        return static_cast<std::uint32_t>(std::lower_bound(occupied.begin(), occupied.end(), c) - occupied.begin());
    };

    CommunityRemap out;
    std::vector<std::string> labels;
    for (auto c : occupied)
        labels.push_back("a" + std::to_string(c / poi.n_communities) + "p" + std::to_string(c % poi.n_communities));
    out.corpus.vocab[0] = Vocabulary(labels);
    out.corpus.vocab[1] = Vocabulary(labels);
    out.corpus.vocab[2] = corpus.vocab[2];
    out.corpus.documents.reserve(corpus.size());
    for (const auto& doc : corpus.documents) {
        std::vector<TripWord> words;
        words.reserve(doc.n_words());
        for (const auto& w : doc.words())
            words.push_back({dense(code[0][w.origin]), dense(code[1][w.destination]), w.time_slot});
        out.corpus.documents.emplace_back(doc.passenger_id(), std::move(words));
    }
    out.combined_codes = std::move(occupied);
    return out;
}

inline Corpus remap_corpus(const Corpus& corpus, const CommunityLabeling& adj, const CommunityLabeling& poi,
                           std::span<const std::string> node_names = {}) {
    return remap_corpus_detailed(corpus, adj, poi, node_names).corpus;
}

/// Export: station_name,adj_community,poi_community,combined_index.
inline void write_community_labels(std::ostream& out, std::span<const std::string> names, const CommunityLabeling& adj,
                                   const CommunityLabeling& poi) {
    out << "station_name,adj_community,poi_community,combined_index\n";
    for (std::size_t i = 0; i < names.size(); ++i)
        out << names[i] << ',' << adj.labels[i] << ',' << poi.labels[i] << ','
            << static_cast<std::size_t>(adj.labels[i]) * poi.n_communities + poi.labels[i] << '\n';
}

}  // namespace tdpmm
