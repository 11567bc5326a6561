#pragma once

namespace currentfit {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace currentfit
