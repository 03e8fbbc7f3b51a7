#pragma once

#include <string>
#include <string_view>

namespace dyncontract {

/// Shortest text for a double with 17 significant digits, independent of the global locale.
std::string fmt17(double v);

/// Locale-independent parse of a whole token; throws ConfigError naming `what` on failure.
double parse_double(std::string_view s, std::string_view what);
long long parse_int(std::string_view s, std::string_view what);

} // namespace dyncontract
