#include "dyncontract/format.hpp"

#include <charconv>
#include <cmath>

#include "dyncontract/errors.hpp"

namespace dyncontract {

std::string fmt17(double v) {
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, r.ptr);
}

double parse_double(std::string_view s, std::string_view what) {
    double v = 0.0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
        throw ConfigError("cannot parse number '" + std::string(s) + "' for " + std::string(what));
    return v;
}

long long parse_int(std::string_view s, std::string_view what) {
    long long v = 0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
        throw ConfigError("cannot parse integer '" + std::string(s) + "' for " + std::string(what));
    return v;
}

} // namespace dyncontract
