#pragma once

namespace repforge {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace repforge
