#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tdpmm/error.hpp"
#include "tdpmm/text.hpp"

namespace tdpmm {

/// The three categorical dimensions of a trip word.
enum class Dim : std::size_t { Origin = 0, Destination = 1, Time = 2 };
inline constexpr std::size_t kNumDims = 3;
inline constexpr std::array<const char*, kNumDims> kDimNames = {"origin", "destination", "time"};

using VocabSizes = std::array<std::size_t, kNumDims>;

/// One trip: (origin, destination, time slot) as vocabulary indices.
struct TripWord {
    std::uint32_t origin = 0;
    std::uint32_t destination = 0;
    std::uint32_t time_slot = 0;

    std::uint32_t operator[](std::size_t dim) const {
        return dim == 0 ? origin : dim == 1 ? destination : time_slot;
    }
    friend bool operator==(const TripWord&, const TripWord&) = default;
};

struct WordCount {
    std::uint32_t word = 0;
    std::uint32_t count = 0;
    friend bool operator==(const WordCount&, const WordCount&) = default;
};

/// A passenger's bag of trips with per-dimension sparse counts cached at
/// construction. Counts are sorted by word index.
class Document {
public:
    Document() = default;
    Document(std::string passenger_id, std::vector<TripWord> words)
        : passenger_id_(std::move(passenger_id)), words_(std::move(words)) {
        if (words_.empty()) throw ValidationError("corpus", "document '" + passenger_id_ + "' has no trips");
        for (std::size_t dim = 0; dim < kNumDims; ++dim) {
            std::map<std::uint32_t, std::uint32_t> tally;
            for (const auto& w : words_) ++tally[w[dim]];
            counts_[dim].reserve(tally.size());
            for (auto [word, count] : tally) counts_[dim].push_back({word, count});
        }
    }

    const std::string& passenger_id() const noexcept { return passenger_id_; }
    std::span<const TripWord> words() const noexcept { return words_; }
    std::size_t n_words() const noexcept { return words_.size(); }
    std::span<const WordCount> counts(std::size_t dim) const noexcept { return counts_[dim]; }
    std::span<const WordCount> counts(Dim dim) const noexcept { return counts_[static_cast<std::size_t>(dim)]; }

    friend bool operator==(const Document& a, const Document& b) {
        return a.passenger_id_ == b.passenger_id_ && a.words_ == b.words_;
    }

private:
    std::string passenger_id_;
    std::vector<TripWord> words_;
    std::array<std::vector<WordCount>, kNumDims> counts_;
};

/// Bijective index <-> label map for one dimension.
class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> labels) {
        for (auto& l : labels) {
            if (index_.contains(l)) throw ValidationError("corpus", "duplicate vocabulary label '" + l + "'");
            add(l);
        }
    }

    std::uint32_t add(const std::string& label) {
        auto [it, inserted] = index_.try_emplace(label, static_cast<std::uint32_t>(labels_.size()));
        if (inserted) labels_.push_back(label);
        return it->second;
    }

    std::optional<std::uint32_t> find(const std::string& label) const {
        auto it = index_.find(label);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    const std::string& label(std::size_t i) const { return labels_.at(i); }
    const std::vector<std::string>& labels() const noexcept { return labels_; }
    std::size_t size() const noexcept { return labels_.size(); }

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.labels_ == b.labels_; }

private:
    std::vector<std::string> labels_;
    std::unordered_map<std::string, std::uint32_t> index_;
};

struct Corpus {
    std::vector<Document> documents;
    std::array<Vocabulary, kNumDims> vocab;

    std::size_t size() const noexcept { return documents.size(); }
    VocabSizes vocab_sizes() const { return {vocab[0].size(), vocab[1].size(), vocab[2].size()}; }

    std::size_t total_words() const {
        std::size_t total = 0;
        for (const auto& d : documents) total += d.n_words();
        return total;
    }

    /// Throws ValidationError unless M >= 1 and every index is in range.
    void validate() const {
        if (documents.empty()) throw ValidationError("corpus", "corpus is empty");
        const auto sizes = vocab_sizes();
        for (const auto& doc : documents) {
            for (const auto& w : doc.words()) {
                for (std::size_t dim = 0; dim < kNumDims; ++dim) {
                    if (w[dim] >= sizes[dim]) {
                        throw ValidationError("corpus", "document '" + doc.passenger_id() + "' has " +
                                                            kDimNames[dim] + " index " + std::to_string(w[dim]) +
                                                            " outside vocabulary of size " + std::to_string(sizes[dim]));
                    }
                }
            }
        }
    }

    friend bool operator==(const Corpus&, const Corpus&) = default;
};

/// Column names and parsing knobs for raw trip files.
struct TripSchema {
    char delimiter = ',';
    std::string passenger_column = "passenger_id";
    std::string origin_column = "origin";
    std::string destination_column = "destination";
    std::string time_column = "time";
    /// "hour": time field parses to an hour of day 0-23 (bare integer, HH:MM[:SS],
    /// or a date-time whose time part is HH:MM[:SS]). "label": the field is
    /// already a slot label and is used verbatim.
    std::string time_format = "hour";
    /// Width of one time slot in hours; 1 gives hour-of-day slots.
    int slot_hours = 1;
    /// Passengers with fewer trips are dropped.
    std::size_t min_trips = 1;
    /// If non-empty, seeds both the origin and destination vocabularies in this
    /// order so indices line up with externally supplied station graphs.
    std::vector<std::string> station_vocabulary;
};

namespace detail {

inline std::optional<int> parse_hour(std::string_view field) {
    field = text::trim(field);
    if (auto sep = field.find_last_of(" T"); sep != std::string_view::npos) field = field.substr(sep + 1);
    if (auto colon = field.find(':'); colon != std::string_view::npos) field = field.substr(0, colon);
    auto hour = text::parse_number<int>(field);
    if (!hour || *hour < 0 || *hour > 23) return std::nullopt;
    return hour;
}

inline std::string two_digits(int v) {
    return (v < 10 ? "0" : "") + std::to_string(v);
}

inline std::string slot_label(int hour, int slot_hours) {
    const int start = (hour / slot_hours) * slot_hours;
    if (slot_hours == 1) return two_digits(start);
    return two_digits(start) + "-" + two_digits(std::min(start + slot_hours, 24));
}

inline std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ValidationError("corpus", "schema error: missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
}

}  // namespace detail

/// Parses delimiter-separated trip records. Vocabularies and passengers are
/// indexed in first-appearance order; trips keep row order within a passenger.
inline Corpus parse_trips(std::istream& in, const TripSchema& schema, const std::string& source = "<input>") {
    if (schema.slot_hours < 1 || schema.slot_hours > 24)
        throw ValidationError("corpus", "slot_hours must be in [1, 24]");
    if (schema.time_format != "hour" && schema.time_format != "label")
        throw ValidationError("corpus", "time_format must be 'hour' or 'label'");

    std::string line;
    if (!std::getline(in, line)) throw ValidationError("corpus", source + ": empty corpus (no header row)");
    const auto header = text::split(line, schema.delimiter);
    const std::size_t pcol = detail::column_index(header, schema.passenger_column);
    const std::size_t ocol = detail::column_index(header, schema.origin_column);
    const std::size_t dcol = detail::column_index(header, schema.destination_column);
    const std::size_t tcol = detail::column_index(header, schema.time_column);
    const std::size_t needed = std::max({pcol, ocol, dcol, tcol}) + 1;

    Corpus corpus;
    for (const auto& station : schema.station_vocabulary) {
        corpus.vocab[0].add(station);
        corpus.vocab[1].add(station);
    }

    std::vector<std::string> ids;
    std::unordered_map<std::string, std::size_t> passenger_index;
    std::vector<std::vector<TripWord>> trips;

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        const auto fields = text::split(line, schema.delimiter);
        if (fields.size() < needed)
            throw ValidationError("corpus", source + ":" + std::to_string(line_no) + ": row has " +
                                                std::to_string(fields.size()) + " fields, expected at least " +
                                                std::to_string(needed));
        std::string slot;
        if (schema.time_format == "label") {
            slot = fields[tcol];
            if (slot.empty())
                throw ValidationError("corpus", source + ":" + std::to_string(line_no) + ": empty time label");
        } else {
            auto hour = detail::parse_hour(fields[tcol]);
            if (!hour)
                throw ValidationError("corpus", source + ":" + std::to_string(line_no) + ": unparseable time '" +
                                                    fields[tcol] + "'");
            slot = detail::slot_label(*hour, schema.slot_hours);
        }
        auto lookup = [&](std::size_t dim, const std::string& label) {
            if (dim < 2 && !schema.station_vocabulary.empty()) {
                auto idx = corpus.vocab[dim].find(label);
                if (!idx)
                    throw ValidationError("corpus", source + ":" + std::to_string(line_no) + ": station '" + label +
                                                        "' not in the station vocabulary");
                return *idx;
            }
            return corpus.vocab[dim].add(label);
        };
        TripWord w{lookup(0, fields[ocol]), lookup(1, fields[dcol]), lookup(2, slot)};

        auto [it, inserted] = passenger_index.try_emplace(fields[pcol], ids.size());
        if (inserted) {
            ids.push_back(fields[pcol]);
            trips.emplace_back();
        }
        trips[it->second].push_back(w);
    }

    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (trips[i].size() < schema.min_trips) continue;
        corpus.documents.emplace_back(std::move(ids[i]), std::move(trips[i]));
    }
    if (corpus.documents.empty()) throw ValidationError("corpus", source + ": empty corpus (no trips)");
    return corpus;
}

inline Corpus load_trips(const std::string& path, const TripSchema& schema = {}) {
    auto in = text::open_input(path, "corpus");
    return parse_trips(in, schema, path);
}

/// Reads a station list, one name per line (blank lines ignored).
inline std::vector<std::string> load_station_list(const std::string& path) {
    auto in = text::open_input(path, "corpus");
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        auto s = text::trim(line);
        if (!s.empty()) out.emplace_back(s);
    }
    return out;
}

// Serialized form.
//
// corpus file: header "passenger_id,origin_idx,dest_idx,time_idx", then one
// line per trip in document order.
// vocabulary sidecar: header "dimension,index,label", then one line per label
// with dimension in {origin, destination, time}, indices ascending from 0.

inline void write_corpus(const Corpus& corpus, std::ostream& trips, std::ostream& vocab) {
    trips << "passenger_id,origin_idx,dest_idx,time_idx\n";
    for (const auto& doc : corpus.documents) {
        if (doc.passenger_id().find_first_of(",\n") != std::string::npos)
            throw ValidationError("corpus", "passenger id '" + doc.passenger_id() + "' contains a delimiter");
        for (const auto& w : doc.words())
            trips << doc.passenger_id() << ',' << w.origin << ',' << w.destination << ',' << w.time_slot << '\n';
    }
    vocab << "dimension,index,label\n";
    for (std::size_t dim = 0; dim < kNumDims; ++dim) {
        for (std::size_t i = 0; i < corpus.vocab[dim].size(); ++i)
            vocab << kDimNames[dim] << ',' << i << ',' << corpus.vocab[dim].label(i) << '\n';
    }
}

inline void write_corpus(const Corpus& corpus, const std::string& trips_path, const std::string& vocab_path) {
    auto trips = text::open_output(trips_path, "corpus");
    auto vocab = text::open_output(vocab_path, "corpus");
    write_corpus(corpus, trips, vocab);
    if (!trips || !vocab) throw IoError("corpus", "failed writing corpus to '" + trips_path + "'");
}

inline Corpus read_corpus(std::istream& trips, std::istream& vocab) {
    Corpus corpus;
    std::string line;
    if (!std::getline(vocab, line)) throw ValidationError("corpus", "empty vocabulary file");
    std::size_t line_no = 1;
    while (std::getline(vocab, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        auto first = line.find(',');
        auto second = first == std::string::npos ? first : line.find(',', first + 1);
        if (second == std::string::npos)
            throw ValidationError("corpus", "vocabulary line " + std::to_string(line_no) + " is malformed");
        const std::string dim_name(text::trim(std::string_view(line).substr(0, first)));
        auto dim_it = std::find(kDimNames.begin(), kDimNames.end(), dim_name);
        auto index = text::parse_number<std::size_t>(std::string_view(line).substr(first + 1, second - first - 1));
        if (dim_it == kDimNames.end() || !index)
            throw ValidationError("corpus", "vocabulary line " + std::to_string(line_no) + " is malformed");
        auto& v = corpus.vocab[static_cast<std::size_t>(dim_it - kDimNames.begin())];
        std::string label(text::trim(std::string_view(line).substr(second + 1)));
        if (*index != v.size() || v.find(label))
            throw ValidationError("corpus", "vocabulary line " + std::to_string(line_no) +
                                                ": indices must be contiguous and labels unique");
        v.add(label);
    }

    if (!std::getline(trips, line)) throw ValidationError("corpus", "empty corpus");
    std::vector<std::string> ids;
    std::unordered_map<std::string, std::size_t> index;
    std::vector<std::vector<TripWord>> words;
    line_no = 1;
    while (std::getline(trips, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        auto f = text::split(line, ',');
        std::array<std::optional<std::uint32_t>, 3> idx;
        if (f.size() == 4)
            for (std::size_t d = 0; d < 3; ++d) idx[d] = text::parse_number<std::uint32_t>(f[d + 1]);
        if (f.size() != 4 || !idx[0] || !idx[1] || !idx[2])
            throw ValidationError("corpus", "corpus line " + std::to_string(line_no) + " is malformed");
        auto [it, inserted] = index.try_emplace(f[0], ids.size());
        if (inserted) {
            ids.push_back(f[0]);
            words.emplace_back();
        }
        words[it->second].push_back({*idx[0], *idx[1], *idx[2]});
    }
    for (std::size_t i = 0; i < ids.size(); ++i) corpus.documents.emplace_back(std::move(ids[i]), std::move(words[i]));
    corpus.validate();
    return corpus;
}

inline Corpus read_corpus(const std::string& trips_path, const std::string& vocab_path) {
    auto trips = text::open_input(trips_path, "corpus");
    auto vocab = text::open_input(vocab_path, "corpus");
    return read_corpus(trips, vocab);
}

/// Row-major flat index (o * V_D + d) * V_T + t.
inline std::size_t flat_index(const TripWord& w, const VocabSizes& sizes) {
    return (static_cast<std::size_t>(w.origin) * sizes[1] + w.destination) * sizes[2] + w.time_slot;
}

/// Dense count tensor of a document, flattened with `flat_index`.
inline std::vector<double> document_count_vector(const Document& doc, const VocabSizes& sizes) {
    std::vector<double> v(sizes[0] * sizes[1] * sizes[2], 0.0);
    for (const auto& w : doc.words()) v[flat_index(w, sizes)] += 1.0;
    return v;
}

/// Sparse form of `document_count_vector`: (flat index, count) sorted by index.
inline std::vector<std::pair<std::size_t, double>> sparse_count_vector(const Document& doc, const VocabSizes& sizes) {
    std::map<std::size_t, double> tally;
    for (const auto& w : doc.words()) tally[flat_index(w, sizes)] += 1.0;
    return {tally.begin(), tally.end()};
}

}  // namespace tdpmm
