#pragma once

#include <charconv>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tdpmm/error.hpp"

namespace tdpmm::text {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

/// Splits on a single delimiter character and trims each field. Fields wrapped
/// in double quotes lose the quotes; embedded delimiters are not supported.
inline std::vector<std::string> split(std::string_view line, char delim) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(delim, start);
        auto field = trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (field.size() >= 2 && field.front() == '"' && field.back() == '"') field = field.substr(1, field.size() - 2);
        out.emplace_back(field);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
    s = trim(s);
    T value{};
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, value);
    if (ec != std::errc{} || ptr != end || s.empty()) return std::nullopt;
    return value;
}

inline std::ifstream open_input(const std::string& path, const std::string& module) {
    std::ifstream in(path);
    if (!in) throw IoError(module, "cannot open '" + path + "' for reading");
    return in;
}

inline std::ofstream open_output(const std::string& path, const std::string& module) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(module, "cannot open '" + path + "' for writing");
    return out;
}

}  // namespace tdpmm::text
