#pragma once

#include "keyflow/errors.hpp"

#include <cctype>
#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace keyflow {

// Locale-independent number <-> text helpers. std::to_chars emits the
// shortest decimal form that round-trips exactly, which is what the
// byte-deterministic file formats rely on.

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& context = "input") {
    double v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw DataError("malformed number '" + std::string(s) + "' in " + context);
    return v;
}

inline std::int64_t parse_int(std::string_view s, const std::string& context = "input") {
    std::int64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw DataError("malformed integer '" + std::string(s) + "' in " + context);
    return v;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    const auto is_ws = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && is_ws(line[i])) ++i;
        std::size_t j = i;
        while (j < line.size() && !is_ws(line[j])) ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

}  // namespace keyflow
