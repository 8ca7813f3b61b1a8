#pragma once

#include <numbers>

namespace levsim {

inline constexpr double kPi = std::numbers::pi;
/// Vacuum permeability, exact pre-2019 SI value (H/m).
inline constexpr double kMu0 = 4.0e-7 * kPi;
inline constexpr double kGravity = 9.81;           // m/s^2
inline constexpr double kSpeedOfLight = 299792458.0;  // m/s

}  // namespace levsim
