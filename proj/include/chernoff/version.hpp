#pragma once

namespace chernoff {

inline constexpr const char* kLibraryVersion = "0.1.0";

}  // namespace chernoff
