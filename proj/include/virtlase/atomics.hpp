#pragma once

#include "virtlase/constants.hpp"
#include "virtlase/errors.hpp"

#include <array>
#include <cmath>
#include <string_view>
#include <type_traits>

namespace virtlase {

enum class TransitionLabel { green_556, blue_399 };

std::string_view to_string(TransitionLabel label);

/// An atomic transition from the 1S0 ground state. Linewidths are angular
/// frequencies (rad/s); wavelengths in metres.
struct TransitionSpec
{
    TransitionLabel label = TransitionLabel::green_556;
    double wavelength = 0.0;
    double linewidth = 0.0;
    double saturation_intensity = 0.0; // W/m^2
    double lande_g_upper = 0.0;
    std::array<int, 3> sublevels_upper{-1, 0, 1};

    /// 1S0 -> 3P1 intercombination line (pump and lasing transition).
    static TransitionSpec green_556();
    /// 1S0 -> 1P1 MOT line; its upper level broadens the virtual level.
    static TransitionSpec blue_399();
};

struct AtomEnsemble
{
    double total_atoms = 1.0e7;
    double cloud_radius_rms = 1.0e-3; // m
    double temperature = 2.0e-3;      // K
    double species_mass = constants::yb174_mass;
};

/// Two-level saturation intensity 2 pi^2 hbar c Gamma / (3 lambda^3), in W/m^2.
double saturation_intensity(double linewidth, double wavelength);
inline double saturation_intensity(const TransitionSpec& t)
{
    return saturation_intensity(t.linewidth, t.wavelength);
}

/// Saturation parameter of a Gaussian beam using the mean intensity P/(pi w^2)
/// over the 1/e^2 disk, not the peak 2P/(pi w^2). With 7 mW and w = 2.4 mm this
/// gives s ~ 280 on the 556 nm line.
double saturation_parameter(double power, double waist_radius, double saturation_intensity);

/// Zeeman shift g m mu_B B / h in Hz for B in gauss. Only m in {-1, 0, +1}
/// exists in the J = 1 manifold.
template <typename Scalar>
Scalar zeeman_shift(double lande_g, int m, const Scalar& field_gauss)
{
    if (m < -1 || m > 1)
        throw DomainError("zeeman_shift: |m| > 1 is not part of the 3P1 manifold");
    return Scalar(lande_g * m * constants::bohr_hz_per_gauss) * field_gauss;
}

/// Effective width Gamma' (rad/s): natural linewidth with a Gaussian Doppler
/// FWHM added in quadrature.
inline double doppler_broadened_width(double linewidth, double doppler_sigma_hz)
{
    const double fwhm = constants::two_pi * doppler_sigma_hz * 2.0 * std::sqrt(2.0 * std::log(2.0));
    return std::sqrt(linewidth * linewidth + fwhm * fwhm);
}

/// Steady-state excited fraction of a driven two-level atom,
/// (s/2) / (1 + s + (2 delta / Gamma')^2), with delta in Hz.
template <typename Scalar>
Scalar excited_population(const Scalar& detuning_hz, const Scalar& s, double linewidth,
                          double doppler_sigma_hz = 0.0)
{
    if (!(linewidth > 0.0) || doppler_sigma_hz < 0.0)
        throw DomainError("excited_population: linewidth must be > 0 and doppler sigma >= 0");
    if (s < Scalar(0))
        throw DomainError("excited_population: negative saturation parameter");
    const double width = doppler_broadened_width(linewidth, doppler_sigma_hz);
    const Scalar x = Scalar(2.0 * constants::two_pi / width) * detuning_hz;
    if constexpr (std::is_floating_point_v<Scalar>) {
        if (std::isinf(s))
            return Scalar(0.5);
    }
    return (s / Scalar(2)) / (Scalar(1) + s + x * x);
}

/// One-dimensional rms Doppler shift sqrt(kT/m)/lambda in Hz.
double doppler_sigma(double temperature, double mass, double wavelength);

} // namespace virtlase
