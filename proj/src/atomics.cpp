#include "virtlase/atomics.hpp"

namespace virtlase {

std::string_view to_string(TransitionLabel label)
{
    switch (label) {
    case TransitionLabel::green_556:
        return "green_556";
    case TransitionLabel::blue_399:
        return "blue_399";
    }
    return "unknown";
}

TransitionSpec TransitionSpec::green_556()
{
    TransitionSpec t;
    t.label = TransitionLabel::green_556;
    t.wavelength = 556.0e-9;
    t.linewidth = constants::two_pi * 182.0e3;
    t.lande_g_upper = 1.5;
    t.saturation_intensity = virtlase::saturation_intensity(t.linewidth, t.wavelength);
    return t;
}

TransitionSpec TransitionSpec::blue_399()
{
    TransitionSpec t;
    t.label = TransitionLabel::blue_399;
    t.wavelength = 399.0e-9;
    t.linewidth = constants::two_pi * 29.0e6;
    t.lande_g_upper = 1.0; // 1P1
    t.saturation_intensity = virtlase::saturation_intensity(t.linewidth, t.wavelength);
    return t;
}

double saturation_intensity(double linewidth, double wavelength)
{
    if (!(linewidth > 0.0) || !(wavelength > 0.0))
        throw DomainError("saturation_intensity: linewidth and wavelength must be positive");
    using namespace constants;
    return 2.0 * pi * pi * hbar * speed_of_light * linewidth / (3.0 * wavelength * wavelength * wavelength);
}

double saturation_parameter(double power, double waist_radius, double saturation_intensity)
{
    if (power < 0.0 || !(waist_radius > 0.0) || !(saturation_intensity > 0.0))
        throw DomainError("saturation_parameter: need power >= 0, waist > 0, I_sat > 0");
    const double mean_intensity = power / (constants::pi * waist_radius * waist_radius);
    return mean_intensity / saturation_intensity;
}

double doppler_sigma(double temperature, double mass, double wavelength)
{
    if (temperature < 0.0 || !(mass > 0.0) || !(wavelength > 0.0))
        throw DomainError("doppler_sigma: temperature >= 0, mass and wavelength > 0 required");
    return std::sqrt(constants::boltzmann * temperature / mass) / wavelength;
}

} // namespace virtlase
