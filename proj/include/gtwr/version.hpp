#pragma once

namespace gtwr {

inline constexpr const char* version = "0.1.0";

}  // namespace gtwr
