#pragma once

// Tensor Dirichlet process multinomial mixture: collapsed sufficient
// statistics and the r-constrained collapsed Gibbs sampler.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tdpmm/corpus.hpp"
#include "tdpmm/error.hpp"
#include "tdpmm/rng.hpp"

namespace tdpmm {

struct Hyperparams {
    double alpha = 0.01;
    /// Symmetric Dirichlet concentration per dimension (origin, destination, time).
    std::array<double, kNumDims> beta{0.01, 0.01, 0.042};
    /// Minimum cluster size enforced by the disband-and-relocate phase.
    std::size_t r = 45;
    std::size_t max_iter = 50;
    std::size_t k0 = 1;
    std::uint64_t seed = 1;
    /// Use the plain CRP weight m_z instead of m_z + alpha / K for existing tables.
    bool crp_prior = false;
    /// Run disband-and-relocate after every sweep instead of once at the end.
    bool disband_every_sweep = false;
    /// Recount all statistics from scratch after every phase.
    bool audit = true;

    void validate() const {
        if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ValidationError("dpmm", "alpha must be positive");
        for (std::size_t d = 0; d < kNumDims; ++d)
            if (!(beta[d] > 0.0) || !std::isfinite(beta[d]))
                throw ValidationError("dpmm", std::string("beta_") + kDimNames[d] + " must be positive");
        if (r < 1) throw ValidationError("dpmm", "r must be at least 1");
        if (max_iter < 1) throw ValidationError("dpmm", "max_iter must be at least 1");
        if (k0 < 1) throw ValidationError("dpmm", "K0 must be at least 1");
    }
};

using ClusterId = std::uint32_t;
inline constexpr ClusterId kUnassigned = std::numeric_limits<ClusterId>::max();
inline constexpr ClusterId kNewCluster = kUnassigned - 1;

/// Sufficient statistics of one table.
struct Cluster {
    std::size_t m = 0;  // passengers
    std::size_t n = 0;  // words
    std::array<std::vector<std::uint32_t>, kNumDims> word_counts;

    friend bool operator==(const Cluster&, const Cluster&) = default;
};

/// Assignment vector plus per-cluster counts. Cluster ids are slot indices;
/// freed slots are reused last-in first-out. Only non-empty clusters are live.
class ClusterState {
public:
    ClusterState(const VocabSizes& sizes, std::size_t n_docs) : sizes_(sizes), z_(n_docs, kUnassigned) {}

    static ClusterState from_assignments(const Corpus& corpus, std::span<const ClusterId> z) {
        if (z.size() != corpus.size()) throw ValidationError("dpmm", "assignment vector length differs from corpus size");
        ClusterState s(corpus.vocab_sizes(), corpus.size());
        for (std::size_t u = 0; u < z.size(); ++u) {
            if (z[u] == kUnassigned) continue;
            while (s.slots_.size() <= z[u]) s.slots_.push_back(s.empty_cluster());
            if (s.slots_[z[u]].m == 0) s.pending_ = z[u];
            s.add(u, corpus.documents[u], z[u]);
        }
        for (ClusterId id = static_cast<ClusterId>(s.slots_.size()); id-- > 0;)
            if (s.slots_[id].m == 0) s.free_.push_back(id);
        return s;
    }

    std::size_t num_clusters() const noexcept { return live_.size(); }
    std::size_t num_docs() const noexcept { return z_.size(); }
    const VocabSizes& vocab_sizes() const noexcept { return sizes_; }
    std::span<const ClusterId> assignments() const noexcept { return z_; }
    ClusterId assignment(std::size_t u) const { return z_.at(u); }
    /// Live cluster ids, ascending.
    std::span<const ClusterId> live_clusters() const noexcept { return live_; }

    bool is_live(ClusterId id) const { return id < slots_.size() && slots_[id].m > 0; }

    const Cluster& cluster(ClusterId id) const {
        if (!is_live(id)) throw ValidationError("dpmm", "unknown cluster id " + std::to_string(id));
        return slots_[id];
    }

    /// Opens an empty table; it becomes live once a passenger is merged in.
    ClusterId open_cluster() {
        if (!free_.empty()) {
            auto id = free_.back();
            free_.pop_back();
            pending_ = id;
            return id;
        }
        slots_.push_back(empty_cluster());
        pending_ = static_cast<ClusterId>(slots_.size() - 1);
        return *pending_;
    }

    /// Merge: seats passenger u (currently unassigned) at table z.
    void add(std::size_t u, const Document& doc, ClusterId id) {
        if (z_.at(u) != kUnassigned) throw ConsistencyError("dpmm", "passenger " + std::to_string(u) + " is already seated");
        if (id >= slots_.size()) throw ValidationError("dpmm", "unknown cluster id " + std::to_string(id));
        auto& c = slots_[id];
        if (c.m == 0) {
            if (pending_ != id && !is_free_listed(id)) throw ValidationError("dpmm", "unknown cluster id " + std::to_string(id));
            if (pending_ == id) pending_.reset();
            std::erase(free_, id);
            insert_live(id);
        }
        ++c.m;
        c.n += doc.n_words();
        for (std::size_t dim = 0; dim < kNumDims; ++dim)
            for (auto [w, cnt] : doc.counts(dim)) c.word_counts[dim][w] += cnt;
        z_[u] = id;
    }

    /// Kick-out: removes passenger u from its table. Deletes the table when it
    /// empties; returns true in that case.
    bool remove(std::size_t u, const Document& doc) {
        const auto id = z_.at(u);
        if (id == kUnassigned) throw ConsistencyError("dpmm", "passenger " + std::to_string(u) + " is not seated");
        auto& c = slots_[id];
        --c.m;
        c.n -= doc.n_words();
        for (std::size_t dim = 0; dim < kNumDims; ++dim)
            for (auto [w, cnt] : doc.counts(dim)) c.word_counts[dim][w] -= cnt;
        z_[u] = kUnassigned;
        if (c.m == 0) {
            live_.erase(std::lower_bound(live_.begin(), live_.end(), id));
            free_.push_back(id);
            return true;
        }
        return false;
    }

    std::size_t unassigned_count() const {
        return static_cast<std::size_t>(std::count(z_.begin(), z_.end(), kUnassigned));
    }

    /// Recounts every statistic from the assignments and throws
    /// ConsistencyError on any mismatch or empty live cluster.
    void audit(const Corpus& corpus) const {
        if (corpus.size() != z_.size()) throw ConsistencyError("dpmm", "audit: corpus size mismatch");
        std::vector<Cluster> expect(slots_.size(), empty_cluster());
        for (std::size_t u = 0; u < z_.size(); ++u) {
            if (z_[u] == kUnassigned) continue;
            if (z_[u] >= slots_.size() || !std::binary_search(live_.begin(), live_.end(), z_[u]))
                throw ConsistencyError("dpmm", "audit: passenger " + std::to_string(u) + " references dead cluster");
            auto& c = expect[z_[u]];
            const auto& doc = corpus.documents[u];
            ++c.m;
            c.n += doc.n_words();
            for (std::size_t dim = 0; dim < kNumDims; ++dim)
                for (auto [w, cnt] : doc.counts(dim)) c.word_counts[dim][w] += cnt;
        }
        for (ClusterId id = 0; id < slots_.size(); ++id) {
            const bool live = std::binary_search(live_.begin(), live_.end(), id);
            if (live && expect[id].m == 0) throw ConsistencyError("dpmm", "audit: empty cluster " + std::to_string(id) + " is live");
            if (!live && expect[id].m != 0) throw ConsistencyError("dpmm", "audit: cluster " + std::to_string(id) + " has members but is not live");
            if (!(expect[id] == slots_[id])) throw ConsistencyError("dpmm", "audit: counts of cluster " + std::to_string(id) + " disagree with assignments");
            for (std::size_t dim = 0; dim < kNumDims; ++dim) {
                std::size_t sum = 0;
                for (auto v : slots_[id].word_counts[dim]) sum += v;
                if (sum != slots_[id].n)
                    throw ConsistencyError("dpmm", "audit: " + std::string(kDimNames[dim]) + " counts of cluster " +
                                                       std::to_string(id) + " do not sum to n_z");
            }
        }
    }

    /// Cluster ids renumbered 0..K-1 in ascending id order; unassigned stays kUnassigned.
    std::vector<ClusterId> compact_assignments() const {
        std::vector<ClusterId> rank(slots_.size(), kUnassigned);
        for (std::size_t i = 0; i < live_.size(); ++i) rank[live_[i]] = static_cast<ClusterId>(i);
        std::vector<ClusterId> out(z_.size());
        for (std::size_t u = 0; u < z_.size(); ++u) out[u] = z_[u] == kUnassigned ? kUnassigned : rank[z_[u]];
        return out;
    }

    friend bool operator==(const ClusterState& a, const ClusterState& b) {
        if (a.sizes_ != b.sizes_ || a.z_ != b.z_ || a.live_ != b.live_) return false;
        for (auto id : a.live_)
            if (!(a.slots_[id] == b.slots_[id])) return false;
        return true;
    }

private:
    Cluster empty_cluster() const {
        Cluster c;
        for (std::size_t d = 0; d < kNumDims; ++d) c.word_counts[d].assign(sizes_[d], 0);
        return c;
    }
    void insert_live(ClusterId id) { live_.insert(std::lower_bound(live_.begin(), live_.end(), id), id); }
    bool is_free_listed(ClusterId id) const { return std::find(free_.begin(), free_.end(), id) != free_.end(); }

    VocabSizes sizes_;
    std::vector<ClusterId> z_;
    std::vector<Cluster> slots_;
    std::vector<ClusterId> live_;
    std::vector<ClusterId> free_;
    std::optional<ClusterId> pending_;
};

/// log of the rising product x (x+1) ... (x+n-1).
inline double log_rising(double x, std::uint64_t n) {
    if (n <= 16) {
        double s = 0.0;
        for (std::uint64_t j = 0; j < n; ++j) s += std::log(x + static_cast<double>(j));
        return s;
    }
    return std::lgamma(x + static_cast<double>(n)) - std::lgamma(x);
}

namespace detail {

inline void require_kicked_out(const ClusterState& state, std::size_t u) {
    if (u >= state.num_docs()) throw ValidationError("dpmm", "passenger index out of range");
    if (state.assignment(u) != kUnassigned)
        throw ConsistencyError("dpmm", "contract violation: passenger " + std::to_string(u) + " was not kicked out");
}

/// Per-dimension Dirichlet-multinomial predictive term of the document given
/// table counts (word_counts == nullptr means an empty table).
inline double log_likelihood(const Document& doc, const Cluster* table, const VocabSizes& sizes,
                             const std::array<double, kNumDims>& beta) {
    double total = 0.0;
    for (std::size_t dim = 0; dim < kNumDims; ++dim) {
        const double b = beta[dim];
        const double n_z = table ? static_cast<double>(table->n) : 0.0;
        for (auto [w, cnt] : doc.counts(dim)) {
            const double n_zw = table ? static_cast<double>(table->word_counts[dim][w]) : 0.0;
            total += log_rising(n_zw + b, cnt);
        }
        total -= log_rising(n_z + static_cast<double>(sizes[dim]) * b, doc.n_words());
    }
    return total;
}

}  // namespace detail

/// Unnormalized log-probability of seating kicked-out passenger u at existing
/// table z: prior (m_z + alpha/K) / (M - 1 + alpha) times the per-dimension
/// predictive likelihood.
inline double log_prob_existing(const ClusterState& state, const Corpus& corpus, std::size_t u, ClusterId z,
                                const Hyperparams& params) {
    detail::require_kicked_out(state, u);
    const auto& table = state.cluster(z);
    const double big_m = static_cast<double>(state.num_docs());
    const double k = static_cast<double>(state.num_clusters());
    const double weight = params.crp_prior ? static_cast<double>(table.m) : static_cast<double>(table.m) + params.alpha / k;
    return std::log(weight) - std::log(big_m - 1.0 + params.alpha) +
           detail::log_likelihood(corpus.documents[u], &table, state.vocab_sizes(), params.beta);
}

/// Unnormalized log-probability of seating kicked-out passenger u at a new table.
inline double log_prob_new(const ClusterState& state, const Corpus& corpus, std::size_t u, const Hyperparams& params) {
    detail::require_kicked_out(state, u);
    const double big_m = static_cast<double>(state.num_docs());
    return std::log(params.alpha) - std::log(big_m - 1.0 + params.alpha) +
           detail::log_likelihood(corpus.documents[u], nullptr, state.vocab_sizes(), params.beta);
}

class NoTargetError : public Error {
public:
    NoTargetError() : Error("dpmm", "no existing table to relocate into and new tables are not allowed") {}
};

struct Choice {
    ClusterId cluster;  // kNewCluster for a new table
    double probability;
};

/// Normalized conditional over live tables (ascending id) and, if allowed, a
/// trailing new-table entry. Normalized in log space by max subtraction.
inline std::vector<Choice> conditional_distribution(const ClusterState& state, const Corpus& corpus, std::size_t u,
                                                    const Hyperparams& params, bool allow_new) {
    std::vector<Choice> out;
    out.reserve(state.num_clusters() + 1);
    for (auto z : state.live_clusters()) out.push_back({z, log_prob_existing(state, corpus, u, z, params)});
    if (allow_new) out.push_back({kNewCluster, log_prob_new(state, corpus, u, params)});
    if (out.empty()) throw NoTargetError();
    double top = -std::numeric_limits<double>::infinity();
    for (const auto& c : out) top = std::max(top, c.probability);
    double total = 0.0;
    for (auto& c : out) total += (c.probability = std::exp(c.probability - top));
    for (auto& c : out) c.probability /= total;
    return out;
}

/// Draws a table for kicked-out passenger u. Returns kNewCluster if a new
/// table was chosen.
inline ClusterId sample_assignment(const ClusterState& state, const Corpus& corpus, std::size_t u,
                                   const Hyperparams& params, Rng& rng, bool allow_new) {
    const auto dist = conditional_distribution(state, corpus, u, params, allow_new);
    double draw = uniform01(rng);
    for (const auto& c : dist) {
        if (draw < c.probability) return c.cluster;
        draw -= c.probability;
    }
    return dist.back().cluster;
}

/// Uniform random assignment over k0 initial tables; unused tables vanish.
inline ClusterState init_state(const Corpus& corpus, const Hyperparams& params, std::size_t k0, Rng& rng) {
    if (k0 < 1) throw ValidationError("dpmm", "K0 must be at least 1");
    std::vector<ClusterId> z(corpus.size());
    std::uniform_int_distribution<std::size_t> pick(0, k0 - 1);
    for (auto& x : z) x = static_cast<ClusterId>(pick(rng));
    auto state = ClusterState::from_assignments(corpus, z);
    if (params.audit) state.audit(corpus);
    return state;
}

struct SweepReport {
    std::size_t created = 0;
    std::size_t deleted = 0;
    std::size_t k = 0;
};

/// One pass over all passengers in index order: kick-out, choose a table
/// (existing or new), merge.
inline SweepReport gibbs_sweep(ClusterState& state, const Corpus& corpus, const Hyperparams& params, Rng& rng) {
    SweepReport report;
    for (std::size_t u = 0; u < corpus.size(); ++u) {
        const auto& doc = corpus.documents[u];
        if (state.remove(u, doc)) ++report.deleted;
        auto z = sample_assignment(state, corpus, u, params, rng, true);
        if (z == kNewCluster) {
            z = state.open_cluster();
            ++report.created;
        }
        state.add(u, doc, z);
    }
    if (params.audit) state.audit(corpus);
    report.k = state.num_clusters();
    return report;
}

struct RelocationReport {
    std::vector<ClusterId> disbanded;
    std::size_t relocated = 0;
    bool fallback_fired = false;
    std::vector<std::string> warnings;
};

/// Deletes every table with fewer than r passengers and relocates their
/// members, in ascending passenger order, among the surviving tables without
/// allowing new ones. If every table is below r, the largest one (lowest id on
/// ties) is kept and a warning is recorded.
inline RelocationReport disband_and_relocate(ClusterState& state, const Corpus& corpus, const Hyperparams& params,
                                             Rng& rng) {
    RelocationReport report;
    std::vector<ClusterId> small;
    for (auto z : state.live_clusters())
        if (state.cluster(z).m < params.r) small.push_back(z);
    if (small.empty()) return report;

    if (small.size() == state.num_clusters()) {
        ClusterId keep = small.front();
        for (auto z : small)
            if (state.cluster(z).m > state.cluster(keep).m) keep = z;
        std::erase(small, keep);
        report.fallback_fired = true;
        report.warnings.push_back("all " + std::to_string(state.num_clusters()) + " tables have fewer than r=" +
                                  std::to_string(params.r) + " passengers; kept the largest (" +
                                  std::to_string(state.cluster(keep).m) + " passengers)");
    }
    std::sort(small.begin(), small.end());
    report.disbanded = small;

    std::vector<std::size_t> members;
    for (std::size_t u = 0; u < corpus.size(); ++u)
        if (std::binary_search(small.begin(), small.end(), state.assignment(u))) members.push_back(u);
    for (auto u : members) state.remove(u, corpus.documents[u]);
    for (auto u : members) {
        const auto z = sample_assignment(state, corpus, u, params, rng, false);
        state.add(u, corpus.documents[u], z);
    }
    report.relocated = members.size();
    if (params.audit) state.audit(corpus);
    return report;
}

struct RunResult {
    ClusterState state;
    /// K after each sweep (index 0 is the first sweep).
    std::vector<std::size_t> k_trace;
    std::vector<RelocationReport> relocations;

    bool fallback_fired() const {
        return std::any_of(relocations.begin(), relocations.end(), [](const auto& r) { return r.fallback_fired; });
    }
};

/// Full sampler: init with K0 tables, max_iter sweeps, then disband-and-relocate.
inline RunResult run_sampler(const Corpus& corpus, const Hyperparams& params) {
    params.validate();
    corpus.validate();
    Rng rng(params.seed);
    RunResult result{init_state(corpus, params, params.k0, rng), {}, {}};
    result.k_trace.reserve(params.max_iter);
    for (std::size_t iter = 0; iter < params.max_iter; ++iter) {
        gibbs_sweep(result.state, corpus, params, rng);
        if (params.disband_every_sweep) result.relocations.push_back(disband_and_relocate(result.state, corpus, params, rng));
        result.k_trace.push_back(result.state.num_clusters());
    }
    if (!params.disband_every_sweep) result.relocations.push_back(disband_and_relocate(result.state, corpus, params, rng));
    return result;
}

// Exports.

/// passenger_id,cluster_id with compact cluster ids.
inline void write_assignments(std::ostream& out, const Corpus& corpus, std::span<const ClusterId> labels) {
    out << "passenger_id,cluster_id\n";
    for (std::size_t u = 0; u < corpus.size(); ++u) out << corpus.documents[u].passenger_id() << ',' << labels[u] << '\n';
}

/// Reads passenger_id,cluster_id and orders labels by the corpus documents.
inline std::vector<ClusterId> read_assignments(std::istream& in, const Corpus& corpus) {
    std::unordered_map<std::string, ClusterId> by_id;
    std::string line;
    std::getline(in, line);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        auto f = text::split(line, ',');
        auto label = f.size() == 2 ? text::parse_number<ClusterId>(f[1]) : std::nullopt;
        if (!label) throw ValidationError("dpmm", "assignment line " + std::to_string(line_no) + " is malformed");
        by_id[f[0]] = *label;
    }
    std::vector<ClusterId> out;
    out.reserve(corpus.size());
    for (const auto& doc : corpus.documents) {
        auto it = by_id.find(doc.passenger_id());
        if (it == by_id.end()) throw ValidationError("dpmm", "no assignment for passenger '" + doc.passenger_id() + "'");
        out.push_back(it->second);
    }
    return out;
}

/// One block per cluster: a header line "cluster=<id> m=<m_z> n=<n_z>" then one
/// line per dimension "<dimension>=label:count|label:count..." listing the top
/// ten words by count (ties by index), then a blank line.
inline void write_cluster_summary(std::ostream& out, const ClusterState& state, const Corpus& corpus,
                                  std::size_t top = 10) {
    ClusterId compact = 0;
    for (auto z : state.live_clusters()) {
        const auto& c = state.cluster(z);
        out << "cluster=" << compact++ << " m=" << c.m << " n=" << c.n << '\n';
        for (std::size_t dim = 0; dim < kNumDims; ++dim) {
            std::vector<std::uint32_t> idx(c.word_counts[dim].size());
            std::iota(idx.begin(), idx.end(), 0u);
            std::stable_sort(idx.begin(), idx.end(),
                             [&](auto a, auto b) { return c.word_counts[dim][a] > c.word_counts[dim][b]; });
            out << kDimNames[dim] << '=';
            bool first = true;
            for (std::size_t i = 0; i < std::min(top, idx.size()) && c.word_counts[dim][idx[i]] > 0; ++i) {
                out << (first ? "" : "|") << corpus.vocab[dim].label(idx[i]) << ':' << c.word_counts[dim][idx[i]];
                first = false;
            }
            out << '\n';
        }
        out << '\n';
    }
}

inline void write_k_trace(std::ostream& out, std::span<const std::size_t> trace) {
    out << "iteration,K\n";
    for (std::size_t i = 0; i < trace.size(); ++i) out << i + 1 << ',' << trace[i] << '\n';
}

}  // namespace tdpmm
