#pragma once

#include <cstdio>
#include <string>

namespace squeezelab {

/// First line of every CSV artifact.
inline constexpr const char* kSchemaLine = "# squeezelab-schema v1";

/// Round-trippable, locale-independent number formatting for artifacts.
inline std::string fmt_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace squeezelab
