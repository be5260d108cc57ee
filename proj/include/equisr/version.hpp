#pragma once

#include <string>

namespace equisr {

inline constexpr const char* kVersion = "0.1.0";

// First line of every CSV the library writes.
inline std::string version_comment() { return std::string("# equisr ") + kVersion + "\n"; }

}  // namespace equisr
