#pragma once

#include <charconv>
#include <cstdint>
#include <string>

namespace sepmix {

/// Text for a real with 17 significant digits, '%g' style.
inline std::string format_real(double x) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

/// Shortest text that round-trips, for labels such as file names.
inline std::string format_short(double x) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

} // namespace sepmix
