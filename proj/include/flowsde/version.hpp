#pragma once

namespace flowsde {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace flowsde
