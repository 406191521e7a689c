#pragma once

#include "virtlase/gain.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace virtlase {

/// Everything a run depends on besides command-line arguments. Parsed from a
/// flat `key = value` file; unknown keys are rejected.
struct RunConfig
{
    LaserSetup setup;
    OperatingPoint op;
    double calib_atoms = 5000.0;   // TEM0 atom-number threshold at `op`
    double budget_photons = 6.0e5; // TEM0 photons at the budget point
    double budget_atoms = 6000.0;
    double budget_pump_power = 4.0e-3;
    double two_photon_offset = 0.0; // Hz
    double laser_ripple = 1.0e-2;   // relative rms
    double ripple_frequency = 50.0; // Hz
    std::uint64_t seed = 1;

    CalibrationAnchors anchors() const;
};

/// Parse `text` as a number with an optional unit suffix of the given kind and
/// return it in SI (Hz, W, m, K, s, G, G/m, deg). A bare number is taken as SI.
/// Throws ParameterError.
enum class Dimension { none, frequency, power, length, temperature, time, field, gradient, angle, mass };
double parse_quantity(std::string_view text, Dimension dim);

/// `linear:<deg>`, `circular:L`, `circular:R`, or the shorthands H, V, L, R.
Jones parse_polarization(std::string_view text);
std::string format_polarization(const Jones& jones);

RunConfig parse_config(std::istream& in);
RunConfig parse_config_string(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Apply one `key=value` override.
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);

/// Canonical text form: every key once, SI values with 17 significant digits,
/// so parse_config(serialize_config(c)) reproduces c exactly.
std::string serialize_config(const RunConfig& config);

/// FNV-1a 64 of the canonical form without the seed line.
std::uint64_t config_hash(const RunConfig& config);

std::vector<std::string> config_keys();

} // namespace virtlase
