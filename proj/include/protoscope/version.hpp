#pragma once

namespace protoscope {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace protoscope
