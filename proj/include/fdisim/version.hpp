#pragma once

namespace fdisim {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace fdisim
