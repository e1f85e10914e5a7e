#pragma once

/// Locale-independent numeric formatting for CSV output: '.' decimal
/// separator, shortest round-trip representation, LF line endings.

#include <charconv>
#include <cstdint>
#include <ostream>
#include <string>

namespace intens {

inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

inline std::string format_u64(std::uint64_t v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

}  // namespace intens
