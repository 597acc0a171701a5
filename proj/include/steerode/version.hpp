#pragma once

namespace steerode {

inline constexpr const char* kVersion = "0.1.0";

// Seed used by every entry point when the caller does not supply one.
inline constexpr unsigned long long kDefaultSeed = 42;

}  // namespace steerode
