#pragma once

namespace ngp {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kToolName = "ngpull";

}  // namespace ngp
