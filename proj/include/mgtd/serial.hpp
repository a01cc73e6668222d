#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <system_error>

#include "mgtd/error.hpp"

namespace mgtd {

// Shortest round-trip decimal encoding of a double. from_chars(to_string(x))
// recovers x bit-exactly, which the model and feature file formats require.
inline std::string double_to_string(double x) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    if (ec != std::errc{}) throw IoError("double encoding failed");
    return std::string(buf, ptr);
}

inline double parse_double(std::string_view s) {
    double x = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw ParseError("bad floating-point literal: '" + std::string(s) + "'");
    return x;
}

inline std::int64_t parse_int(std::string_view s) {
    std::int64_t x = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw ParseError("bad integer literal: '" + std::string(s) + "'");
    return x;
}

}  // namespace mgtd
