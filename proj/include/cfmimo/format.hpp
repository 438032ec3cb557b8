#pragma once

#include <charconv>
#include <string>
#include <string_view>
#include <system_error>

namespace cfmimo {

/// Shortest decimal text that parses back to the identical double.
inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

/// Strict parse of a full token; returns false on trailing garbage.
inline bool parse_double(std::string_view text, double& out) {
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc() && ptr == text.data() + text.size();
}

}  // namespace cfmimo
