#pragma once

namespace geoaudit {

inline constexpr const char* kToolName = "geoaudit";
inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace geoaudit
