#pragma once

#include "virtlase/atomics.hpp"
#include "virtlase/geometry.hpp"

#include <array>
#include <optional>
#include <vector>

namespace virtlase {

/// Knobs of one experimental setting. All detunings are in Hz relative to the
/// respective atomic resonance; the cavity detuning refers to TEM0.
struct OperatingPoint
{
    double pump_detuning = 5.0e6;
    double cavity_detuning = -30.0e6;
    double mot_detuning = -35.0e6;
    double mot_saturation = 3.0; // six beams at 0.5 I_sat, one scalar drive
    double pump_power = 7.0e-3;
    Jones pump_polarization = linear_polarization(90.0);
    Vec3 b_offset = Vec3(2.38, 0.0, 0.0); // gauss
    Vec3 active_position = Vec3::Zero();  // m, where the pump meets the mode
    double atoms = 1.0e4;                 // atoms coupled to TEM0 in the active region
};

/// Fit constants that absorb efficiencies the model does not resolve.
struct CalibrationConstants
{
    double gain_scale = 1.0;
    double saturation_photons = 1.0e6;
    double two_photon_offset = 0.0; // Hz, shifts the virtual-level resonance
};

/// Static part of the setup: lines, cavity, cloud, field gradient and pump beam shape.
struct LaserSetup
{
    TransitionSpec pump_line = TransitionSpec::green_556();
    TransitionSpec mot_line = TransitionSpec::blue_399();
    CavityGeometry cavity;
    AtomEnsemble ensemble;
    double radial_gradient = 1800.0; // G/m
    double pump_waist = 2.4e-3;
    Vec3 pump_propagation = lab::vertical();
    bool doppler_broadening = false;
    std::vector<int> families{0, 37, 74, 111};
};

struct FamilyGain
{
    int family = 0;
    std::array<double, 3> per_m{}; // m = -1, 0, +1; rates in 1/s
    double total = 0.0;
    bool above_threshold = false; // total >= kappa
};

struct GainBreakdown
{
    std::vector<FamilyGain> families;
};

/// Cavity detuning of the two-photon resonance: delta_c = delta_p + delta_MOT.
inline double two_photon_resonance(double pump_detuning, double mot_detuning)
{
    return pump_detuning + mot_detuning;
}

/// Unit-peak Lorentzian of full width `fwhm` (same units as `delta`).
inline double unit_lorentzian(double delta, double fwhm)
{
    const double half = 0.5 * fwhm;
    return half * half / (delta * delta + half * half);
}

/// Evaluates the two-photon gain through the MOT-dressed virtual level. Holds
/// the setup and the precomputed mode overlaps; immutable after construction.
class GainModel
{
public:
    explicit GainModel(LaserSetup setup);

    const LaserSetup& setup() const { return setup_; }
    double kappa() const { return setup_.cavity.kappa; }

    /// Field at the active region (gauss).
    Vec3 active_field(const OperatingPoint& op) const;

    /// Coupled atoms seen by family N relative to TEM0, times its coupling normalization 1/(N+1).
    double family_weight(int family) const;

    /// Gain of one family, per Zeeman channel. Throws QuantizationAxisError at zero field.
    FamilyGain family_gain(const OperatingPoint& op, int family, const CalibrationConstants& cal) const;

    /// All families of the setup.
    GainBreakdown mode_gain(const OperatingPoint& op, const CalibrationConstants& cal) const;

private:
    LaserSetup setup_;
    double doppler_sigma_hz_ = 0.0;
    std::vector<double> family_weights_; // indexed like setup_.families
    std::vector<int> family_index_;
};

struct CalibrationAnchors
{
    double threshold_atoms = 5000.0;
    OperatingPoint threshold_point; // atoms is replaced by threshold_atoms
    double budget_photons = 6.0e5;
    OperatingPoint budget_point; // single-mode point carrying budget_photons in TEM0
};

/// gain_scale from the TEM0 atom-number threshold, then the saturation photon
/// number from the photon budget. Throws CalibrationError if either anchor has
/// no solution.
CalibrationConstants calibrate(const GainModel& model, const CalibrationAnchors& anchors,
                               double two_photon_offset = 0.0);

enum class ThresholdVariable { atoms, pump_power };

/// Value of `variable` at which the family's gain equals kappa (bisection with
/// bracket expansion). Throws NoThresholdError if the gain stays below kappa.
double threshold_solve(const GainModel& model, const CalibrationConstants& cal, ThresholdVariable variable,
                       OperatingPoint op, int family = 0, double rel_tol = 1e-12);

/// Steady state of dn_i/dt = (G_i/(1 + sum_j n_j/n_sat) - kappa) n_i + G_i.
/// The shared saturation reduces the system to one monotone scalar equation.
std::vector<double> solve_rate_equations(const std::vector<double>& gains, double kappa, double saturation_photons);

/// Closed-form steady state for a single family.
double single_family_photons(double gain, double kappa, double saturation_photons);

/// Relative residual max_i |dn_i/dt| / (G_i + kappa n_i) of a candidate solution.
double rate_equation_residual(const std::vector<double>& gains, const std::vector<double>& photons, double kappa,
                              double saturation_photons);

struct FamilyState
{
    int family = 0;
    double gain = 0.0;
    double photons = 0.0;
    double output_power = 0.0;
    bool lasing = false; // unsaturated gain reaches kappa
};

struct LaserSolution
{
    std::vector<FamilyState> families;
    double total_power() const;
    bool any_lasing() const;
};

LaserSolution steady_state(const GainModel& model, const CalibrationConstants& cal, const OperatingPoint& op);

/// Power leaving through the detected mirror: eta n kappa h c / lambda.
double output_power(double photons, const CavityGeometry& cavity, double wavelength);

struct GridAxis
{
    double start = 0.0;
    double stop = 0.0;
    double step = 1.0e6;

    /// start, start + step, ... <= stop. Empty when start == stop. Throws ParameterError
    /// for step <= 0 or stop < start.
    std::vector<double> values() const;
};

struct MapCell
{
    double pump_detuning = 0.0;
    double cavity_detuning = 0.0;
    std::optional<double> total_power;          // empty when the solver failed
    std::vector<std::optional<double>> family_power;
    bool above_threshold = false;
};

struct DetuningMap
{
    std::vector<int> families;
    std::vector<double> pump_values;
    std::vector<double> cavity_values;
    std::vector<MapCell> cells; // row-major: pump outer, cavity inner

    const MapCell& at(std::size_t pump_index, std::size_t cavity_index) const
    {
        return cells[pump_index * cavity_values.size() + cavity_index];
    }
};

DetuningMap detuning_map(const GainModel& model, const CalibrationConstants& cal, const OperatingPoint& op,
                         const GridAxis& pump, const GridAxis& cavity, unsigned threads = 1);

struct Lobe
{
    std::size_t cells = 0;
    double peak_pump = 0.0;
    double peak_cavity = 0.0;
    double peak_power = 0.0;
    double centroid_pump = 0.0; // power weighted
    double centroid_cavity = 0.0;
    double cavity_fwhm = 0.0; // along the peak row, linear interpolation
};

/// Connected (4-neighbour) regions of above-threshold cells.
std::vector<Lobe> find_lobes(const DetuningMap& map);

enum class ScanVariable { b_offset, mot_detuning };

struct OptimumPoint
{
    double x = 0.0;
    std::optional<double> pump_opt;
    std::optional<double> cavity_opt;
    std::optional<double> power;
};

struct LinearFit
{
    double slope = 0.0;
    double intercept = 0.0;
    std::size_t points = 0;
};

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

struct OptimumScan
{
    ScanVariable variable = ScanVariable::b_offset;
    std::vector<OptimumPoint> points;
    LinearFit pump_fit;
    LinearFit cavity_fit;
    double two_photon_offset = 0.0; // mean of cavity_opt - pump_opt - mot_detuning
};

struct ScanWindow
{
    GridAxis pump{-15.0e6, 15.0e6, 1.0e6};
    GridAxis cavity{-70.0e6, 0.0, 1.0e6};
    int lobe = +1; // +1: pump > 0, -1: pump < 0, 0: anywhere
    double tolerance = 1.0; // Hz
};

/// For each value (gauss along the direction of op.b_offset, or Hz of MOT
/// detuning) locate the power maximum over the detuning window; flat points are
/// reported without optima.
OptimumScan optimum_scan(const GainModel& model, const CalibrationConstants& cal, const OperatingPoint& op,
                         ScanVariable variable, const std::vector<double>& values, const ScanWindow& window = {});

} // namespace virtlase
