#pragma once

#include <cstdio>
#include <string>

namespace enk {

// Decimal float with 9 significant digits, the format every CSV emitted by
// the library uses.
inline std::string format_g9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace enk
