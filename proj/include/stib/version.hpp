#pragma once

namespace stib {

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace stib
