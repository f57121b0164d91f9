#pragma once

#include <charconv>
#include <string>
#include <system_error>

namespace stairiqa {

// Shortest decimal form that round-trips the exact double.
inline std::string double_to_string(double v) {
    char buf[32];
    const std::to_chars_result res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace stairiqa
