#pragma once

namespace dulqa {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace dulqa
