#pragma once

namespace hsar {

inline constexpr const char* kVersion = "0.1.0";
/// Bumped whenever a JSON output changes shape.
inline constexpr int kSchemaVersion = 1;

}  // namespace hsar
