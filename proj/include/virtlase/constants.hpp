#pragma once

#include <numbers>

namespace virtlase::constants {

// CODATA 2018 (exact where SI defines them)
inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * pi;
inline constexpr double planck = 6.62607015e-34;           // J s
inline constexpr double hbar = planck / two_pi;            // J s
inline constexpr double speed_of_light = 299792458.0;      // m/s
inline constexpr double boltzmann = 1.380649e-23;          // J/K
inline constexpr double bohr_magneton = 9.2740100783e-24;  // J/T
inline constexpr double atomic_mass_unit = 1.66053906660e-27; // kg

inline constexpr double gauss = 1.0e-4; // T
// mu_B / h in Hz per gauss (about 1.3996 MHz/G)
inline constexpr double bohr_hz_per_gauss = bohr_magneton / planck * gauss;

inline constexpr double yb174_mass = 173.9388664 * atomic_mass_unit;

} // namespace virtlase::constants
