#pragma once

// Internal cluster-quality metrics (RMSSTD, RS, CH) on flat count vectors and
// external agreement scores (NMI, ARI) for labelled synthetic data.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tdpmm/corpus.hpp"
#include "tdpmm/error.hpp"

namespace tdpmm {

struct MetricOptions {
    /// Divide each document vector by its length before measuring.
    bool normalize_docs = false;
    /// Textbook Calinski-Harabasz: weight each centroid term by cluster size.
    bool weighted_ch = false;
};

struct MetricReport {
    double rmsstd = 0.0;
    double rs = 0.0;
    double ch = 0.0;
    std::size_t k = 0;
    std::size_t m = 0;
    /// Degenerate-case flags, e.g. "rmsstd_undefined".
    std::vector<std::string> notes;
};

/// Sum-of-squares decomposition shared by every internal metric.
struct ScatterDecomposition {
    double ss_within = 0.0;
    double ss_total = 0.0;
    /// sum_k ||c_k - g||^2 (unweighted) and sum_k m_k ||c_k - g||^2.
    double between_unweighted = 0.0;
    double between_weighted = 0.0;
    std::size_t k = 0;
    std::size_t m = 0;
    std::size_t dims = 0;
};

namespace detail {

using SparseVec = std::vector<std::pair<std::size_t, double>>;
using SparseSum = std::unordered_map<std::size_t, double>;

inline double norm2(const SparseSum& v) {
    double s = 0.0;
    for (const auto& [i, x] : v) s += x * x;
    return s;
}

inline double value_at(const SparseSum& v, std::size_t i) {
    auto it = v.find(i);
    return it == v.end() ? 0.0 : it->second;
}

/// ||d - c||^2 with c's squared norm precomputed; only touches d's support.
inline double distance2(const SparseVec& d, const SparseSum& c, double c_norm2) {
    double s = c_norm2;
    for (const auto& [i, x] : d) {
        const double ci = value_at(c, i);
        s += (x - ci) * (x - ci) - ci * ci;
    }
    return std::max(s, 0.0);
}

}  // namespace detail

template <typename Label>
ScatterDecomposition scatter_decomposition(const Corpus& corpus, std::span<const Label> labels,
                                           const MetricOptions& opts = {}) {
    if (labels.size() != corpus.size()) throw ValidationError("eval", "assignment length differs from corpus size");
    const auto sizes = corpus.vocab_sizes();
    ScatterDecomposition out;
    out.m = corpus.size();
    out.dims = sizes[0] * sizes[1] * sizes[2];

    std::map<Label, std::size_t> cluster_of;
    for (auto l : labels) cluster_of.try_emplace(l, cluster_of.size());
    out.k = cluster_of.size();

    std::vector<detail::SparseVec> docs;
    docs.reserve(out.m);
    for (const auto& d : corpus.documents) {
        auto v = sparse_count_vector(d, sizes);
        if (opts.normalize_docs)
            for (auto& [i, x] : v) x /= static_cast<double>(d.n_words());
        docs.push_back(std::move(v));
    }

    std::vector<detail::SparseSum> centroid(out.k);
    std::vector<std::size_t> members(out.k, 0);
    detail::SparseSum global;
    for (std::size_t u = 0; u < out.m; ++u) {
        const auto k = cluster_of.at(labels[u]);
        ++members[k];
        for (const auto& [i, x] : docs[u]) {
            centroid[k][i] += x;
            global[i] += x;
        }
    }
    for (std::size_t k = 0; k < out.k; ++k)
        for (auto& [i, x] : centroid[k]) x /= static_cast<double>(members[k]);
    for (auto& [i, x] : global) x /= static_cast<double>(out.m);

    std::vector<double> c_norm2(out.k);
    for (std::size_t k = 0; k < out.k; ++k) c_norm2[k] = detail::norm2(centroid[k]);
    const double g_norm2 = detail::norm2(global);

    for (std::size_t u = 0; u < out.m; ++u) {
        const auto k = cluster_of.at(labels[u]);
        out.ss_within += detail::distance2(docs[u], centroid[k], c_norm2[k]);
        out.ss_total += detail::distance2(docs[u], global, g_norm2);
    }
    for (std::size_t k = 0; k < out.k; ++k) {
        double s = g_norm2;
        for (const auto& [i, x] : centroid[k]) {
            const double gi = detail::value_at(global, i);
            s += (x - gi) * (x - gi) - gi * gi;
        }
        s = std::max(s, 0.0);
        out.between_unweighted += s;
        out.between_weighted += static_cast<double>(members[k]) * s;
    }
    return out;
}

/// sqrt(SS_within / (V_O V_D V_T * sum_k (m_k - 1))); +inf if every cluster is a singleton.
inline double rmsstd_from(const ScatterDecomposition& s) {
    const auto dof = static_cast<double>(s.m - s.k);
    if (dof == 0.0) return std::numeric_limits<double>::infinity();
    return std::sqrt(s.ss_within / (static_cast<double>(s.dims) * dof));
}

/// (SS_total - SS_within) / SS_total; NaN if SS_total is zero.
inline double rs_from(const ScatterDecomposition& s) {
    if (s.ss_total == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return (s.ss_total - s.ss_within) / s.ss_total;
}

/// [sum_k ||c_k - g||^2 / (K - 1)] / [SS_within / (M - K)]; NaN if K = 1 or
/// M = K, +inf if SS_within is zero.
inline double ch_from(const ScatterDecomposition& s, bool weighted = false) {
    if (s.k < 2 || s.m <= s.k) return std::numeric_limits<double>::quiet_NaN();
    const double between = (weighted ? s.between_weighted : s.between_unweighted) / static_cast<double>(s.k - 1);
    const double within = s.ss_within / static_cast<double>(s.m - s.k);
    if (within == 0.0) return std::numeric_limits<double>::infinity();
    return between / within;
}

template <typename Label>
double rmsstd(const Corpus& corpus, std::span<const Label> labels, const MetricOptions& opts = {}) {
    return rmsstd_from(scatter_decomposition(corpus, labels, opts));
}

template <typename Label>
double rs(const Corpus& corpus, std::span<const Label> labels, const MetricOptions& opts = {}) {
    return rs_from(scatter_decomposition(corpus, labels, opts));
}

template <typename Label>
double ch(const Corpus& corpus, std::span<const Label> labels, const MetricOptions& opts = {}) {
    return ch_from(scatter_decomposition(corpus, labels, opts), opts.weighted_ch);
}

template <typename Label>
MetricReport evaluate(const Corpus& corpus, std::span<const Label> labels, const MetricOptions& opts = {}) {
    const auto s = scatter_decomposition(corpus, labels, opts);
    MetricReport r;
    r.k = s.k;
    r.m = s.m;
    r.rmsstd = rmsstd_from(s);
    r.rs = rs_from(s);
    r.ch = ch_from(s, opts.weighted_ch);
    if (s.m == s.k) r.notes.emplace_back("rmsstd_undefined");
    if (s.ss_total == 0.0) r.notes.emplace_back("rs_undefined");
    if (s.k < 2 || s.m <= s.k)
        r.notes.emplace_back("ch_undefined");
    else if (s.ss_within == 0.0)
        r.notes.emplace_back("ch_infinite");
    return r;
}

template <typename Label>
MetricReport evaluate(const Corpus& corpus, const std::vector<Label>& labels, const MetricOptions& opts = {}) {
    return evaluate(corpus, std::span<const Label>(labels), opts);
}

/// metric,value,flags
inline void write_metric_report(std::ostream& out, const MetricReport& r) {
    auto flag_for = [&](const std::string& prefix) {
        std::string f;
        for (const auto& n : r.notes)
            if (n.rfind(prefix, 0) == 0) f += (f.empty() ? "" : "|") + n;
        return f;
    };
    out.precision(17);
    out << "metric,value,flags\n";
    out << "K," << r.k << ",\n";
    out << "M," << r.m << ",\n";
    out << "RMSSTD," << r.rmsstd << ',' << flag_for("rmsstd") << '\n';
    out << "RS," << r.rs << ',' << flag_for("rs") << '\n';
    out << "CH," << r.ch << ',' << flag_for("ch") << '\n';
}

namespace detail {

template <typename A, typename B>
struct Contingency {
    std::map<std::pair<A, B>, double> joint;
    std::map<A, double> rows;
    std::map<B, double> cols;
    double n = 0.0;
};

template <typename A, typename B>
Contingency<A, B> contingency(std::span<const A> a, std::span<const B> b) {
    if (a.size() != b.size()) throw ValidationError("eval", "label vectors have different lengths");
    Contingency<A, B> t;
    for (std::size_t i = 0; i < a.size(); ++i) {
        t.joint[{a[i], b[i]}] += 1.0;
        t.rows[a[i]] += 1.0;
        t.cols[b[i]] += 1.0;
    }
    t.n = static_cast<double>(a.size());
    return t;
}

template <typename Map>
double entropy(const Map& counts, double n) {
    double h = 0.0;
    for (const auto& [k, c] : counts) h -= (c / n) * std::log(c / n);
    return h;
}

}  // namespace detail

/// Normalized mutual information with arithmetic-mean normalization,
/// 2 I(A;B) / (H(A) + H(B)). Two constant labelings count as identical (1).
template <typename A, typename B>
double nmi(std::span<const A> a, std::span<const B> b) {
    auto t = detail::contingency(a, b);
    if (t.n == 0.0) throw ValidationError("eval", "empty labelings");
    const double ha = detail::entropy(t.rows, t.n);
    const double hb = detail::entropy(t.cols, t.n);
    if (ha + hb == 0.0) return 1.0;
    double mi = 0.0;
    for (const auto& [key, c] : t.joint) mi += (c / t.n) * std::log(c * t.n / (t.rows[key.first] * t.cols[key.second]));
    return std::clamp(2.0 * mi / (ha + hb), 0.0, 1.0);
}

template <typename A, typename B>
double nmi(const std::vector<A>& a, const std::vector<B>& b) {
    return nmi(std::span<const A>(a), std::span<const B>(b));
}

/// Adjusted Rand index (Hubert and Arabie).
template <typename A, typename B>
double ari(std::span<const A> a, std::span<const B> b) {
    auto t = detail::contingency(a, b);
    auto c2 = [](double x) { return x * (x - 1.0) / 2.0; };
    double sum_joint = 0.0, sum_rows = 0.0, sum_cols = 0.0;
    for (const auto& [k, c] : t.joint) sum_joint += c2(c);
    for (const auto& [k, c] : t.rows) sum_rows += c2(c);
    for (const auto& [k, c] : t.cols) sum_cols += c2(c);
    const double expected = sum_rows * sum_cols / c2(t.n);
    const double max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index == expected) return 1.0;
    return (sum_joint - expected) / (max_index - expected);
}

template <typename A, typename B>
double ari(const std::vector<A>& a, const std::vector<B>& b) {
    return ari(std::span<const A>(a), std::span<const B>(b));
}

}  // namespace tdpmm
