#pragma once

#include <charconv>
#include <cmath>
#include <string>
#include <system_error>

namespace reshuffle {

/// Shortest decimal text that round-trips to the same double.
inline std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    if (res.ec != std::errc{}) return std::to_string(x);
    return std::string(buf, res.ptr);
}

} // namespace reshuffle
