#pragma once

namespace caucot {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace caucot
