#pragma once

namespace treetomo {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace treetomo
