#pragma once

namespace nethawkes {

inline constexpr const char* kVersion = "0.1.0";

} // namespace nethawkes
