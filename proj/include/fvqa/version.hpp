#pragma once

namespace fvqa {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace fvqa
