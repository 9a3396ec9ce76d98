#pragma once

namespace umk {

inline constexpr const char* kToolVersion = "umk 0.1.0";

}  // namespace umk
